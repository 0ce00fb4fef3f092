//! End-to-end link: source, channel, receiver, estimation and key rate.
//!
//! A run is a sequence of independent frames. Each frame draws its own
//! symbols and noise from a seed derived from `(seed, frame)`, calibrates the
//! shot-noise level from fresh LO-only and dark captures, and splits its
//! quantum symbols into a parameter-estimation half (even data slots) and a
//! key half (odd data slots). Estimates from all frames are pooled before the
//! key rate is evaluated.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{self, CalibrationError, EstimatedParams, NoiseCalibration};
use crate::channel::{self, CaptureKind, ChannelError, ChannelParams, DetectorParams};
use crate::constellation::{build_ps_qam, quadrature_means, Constellation, ConstellationError};
use crate::par::{self, Execution};
use crate::rng::frame_seed;
use crate::rxdsp::{self, RxConfig, RxError};
use crate::security::{self, SecurityError, SecurityParams, SkrReport};
use crate::txdsp::{self, FrameLayout, TxError};
use crate::types::DualPol;

/// Failure of a pipeline stage, labelled with the stage that raised it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("constellation: {0}")]
    Constellation(#[from] ConstellationError),
    #[error("txdsp: {0}")]
    Tx(#[from] TxError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("rxdsp (frame {frame}): {source}")]
    Rx { frame: usize, source: RxError },
    #[error("calibration (frame {frame}): {source}")]
    Calibration { frame: usize, source: CalibrationError },
    #[error("security: {0}")]
    Security(#[from] SecurityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One complex sample per symbol and polarisation.
    #[default]
    Symbol,
    /// Full transmit DSP, analog channel, ADC and receiver DSP.
    Waveform,
}

/// Which channel parameters feed the key-rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    /// Point estimates.
    #[default]
    Point,
    /// Confidence bounds `t_min`, `ξ_B,max` at `eps_pe`.
    Worst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationConfig {
    pub order: usize,
    pub nu: f64,
    pub va: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self { order: 64, nu: 0.08, va: 5.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxConfig {
    /// Symbols per frame, pilots included.
    pub frame_length: usize,
    pub pilot_gain_db: f64,
    pub pilot_seed: u64,
    pub rolloff: f64,
    pub span: usize,
    pub dac_rate: f64,
    pub dac_bits: u32,
    pub dac_clip: f64,
    pub symbol_rate: f64,
    pub shift: f64,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            frame_length: 1 << 16,
            pilot_gain_db: 15.0,
            pilot_seed: 0x5EED,
            rolloff: 0.1,
            span: 128,
            dac_rate: 4e9,
            dac_bits: 14,
            dac_clip: 4.0,
            symbol_rate: 250e6,
            shift: 300e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Complex samples per polarisation in each symbol-mode capture.
    /// Waveform mode captures exactly one frame's worth of ADC samples.
    pub capture_samples: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { capture_samples: 1 << 18 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecurityConfig {
    pub beta: f64,
    pub fer: f64,
    pub n_over_n: f64,
    /// Total block length N.
    pub block_length: f64,
    /// Ignore `block_length` and report the asymptotic rate.
    pub asymptotic: bool,
    pub eps_smooth: f64,
    pub eps_pe: f64,
    pub fock_cutoff: Option<usize>,
    pub estimates: ParamMode,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            beta: 0.96,
            fer: 0.5,
            n_over_n: 0.25,
            block_length: 2e7,
            asymptotic: false,
            eps_smooth: 1e-10,
            eps_pe: 1e-10,
            fock_cutoff: None,
            estimates: ParamMode::Point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Parity-check matrix in alist format.
    pub code: String,
    /// Puncture the mother code up to this rate.
    pub target_rate: Option<f64>,
    pub puncture_seed: u64,
    pub snr_db: Vec<f64>,
    pub frames: usize,
    pub max_iter: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            code: "codes/ira_n10000_r0.2.alist".into(),
            target_rate: None,
            puncture_seed: 1,
            snr_db: vec![-3.5, -3.0, -2.5, -2.0, -1.5],
            frames: 20,
            max_iter: crate::reconciliation::DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub distances_km: Vec<f64>,
    pub block_lengths: Vec<f64>,
    /// Append the asymptotic curve.
    pub asymptotic: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        // Integer kilometres plus the 25.2 km operating point.
        let mut d: Vec<f64> = (0..=60).map(f64::from).collect();
        d.insert(26, 25.2);
        Self { distances_km: d, block_lengths: vec![2e6, 2e7], asymptotic: true }
    }
}

impl SweepConfig {
    pub fn blocks(&self) -> Vec<Option<f64>> {
        let mut b: Vec<Option<f64>> = self.block_lengths.iter().map(|&n| Some(n)).collect();
        if self.asymptotic {
            b.push(None);
        }
        b
    }
}

/// Every tunable of a run. `rx.symbol_rate` and `detector.symbol_rate` are
/// not read from files; they follow `tx.symbol_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub seed: u64,
    pub mode: Mode,
    pub frames: usize,
    pub constellation: ConstellationConfig,
    pub tx: TxConfig,
    pub channel: ChannelParams,
    pub detector: DetectorParams,
    pub rx: RxConfig,
    pub calibration: CalibrationConfig,
    pub security: SecurityConfig,
    pub recon: ReconConfig,
    pub sweep: SweepConfig,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            mode: Mode::Symbol,
            frames: 64,
            constellation: ConstellationConfig::default(),
            tx: TxConfig::default(),
            channel: ChannelParams { xi_b: Some(0.005), ..ChannelParams::default() },
            detector: DetectorParams::default(),
            rx: RxConfig::default(),
            calibration: CalibrationConfig::default(),
            security: SecurityConfig::default(),
            recon: ReconConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl LinkConfig {
    /// Copy shared quantities into the stage configs that need them.
    pub fn resolve(&mut self) {
        self.detector.symbol_rate = self.tx.symbol_rate;
        self.rx.symbol_rate = self.tx.symbol_rate;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.channel.validate()?;
        self.detector.validate()?;
        if self.frames == 0 {
            return Err(PipelineError::Config("frames must be positive".into()));
        }
        if !self.tx.frame_length.is_multiple_of(4) {
            return Err(PipelineError::Config("tx.frame_length must be a multiple of 4".into()));
        }
        self.rx.equalizer.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation, PipelineError> {
        let c = &self.constellation;
        Ok(build_ps_qam(c.order, c.nu, c.va)?)
    }

    /// Security inputs taken straight from the configured link, without simulation.
    pub fn configured_security(&self) -> SecurityParams {
        let s = &self.security;
        SecurityParams {
            va: self.constellation.va,
            t: self.channel.transmittance(),
            eta: self.detector.eta,
            v_el: self.detector.v_el,
            xi_a: self.channel.resolved_xi_a(&self.detector),
            beta: s.beta,
            fer: s.fer,
            symbol_rate: self.tx.symbol_rate,
            n_over_n: s.n_over_n,
            total_block: (!s.asymptotic).then_some(s.block_length),
            eps_smooth: s.eps_smooth,
            eps_pe: s.eps_pe,
            fock_cutoff: s.fock_cutoff,
        }
    }

    /// Security inputs from measured parameters.
    pub fn estimated_security(&self, est: &EstimatedParams) -> Result<SecurityParams, PipelineError> {
        let (t, xi_b) = match self.security.estimates {
            ParamMode::Point => (est.t_hat, est.xi_b_hat),
            ParamMode::Worst => {
                let w = calibration::worst_case(est, self.security.eps_pe, self.constellation.va);
                (w.t_min, w.xi_b_max)
            }
        };
        if !(t > 0.0) {
            return Err(SecurityError::ZeroTransmittance.into());
        }
        let eta = self.detector.eta;
        Ok(SecurityParams {
            t: (2.0 * t * t / eta).min(1.0),
            v_el: est.v_el_hat.max(0.0),
            xi_a: xi_b.max(0.0) / (t * t),
            ..self.configured_security()
        })
    }
}

/// What one frame contributes to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    pub frame: usize,
    /// End of the frame in simulated link time.
    pub time_s: f64,
    pub t_hat: f64,
    pub xi_b_hat: f64,
    pub t_min: f64,
    pub xi_b_max: f64,
    pub v_el_hat: f64,
    pub n0: f64,
    pub n_est: usize,
    /// Per-quadrature SNR `t̂²·V̂_A / σ̂²` in dB.
    pub snr_db: f64,
    pub sync_metric: Option<f64>,
    /// Noise added by the receiver DSP to the signal path alone, SNU.
    pub dsp_excess: Option<f64>,
}

/// Parameter-estimation symbols of a frame, in SNU, plus its summary.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub estimate: FrameEstimate,
    pub x: DualPol<Vec<Complex64>>,
    pub y: DualPol<Vec<Complex64>>,
    pub calibration: NoiseCalibration,
}

/// Quantities every frame of a run shares.
pub struct LinkModel {
    pub cfg: LinkConfig,
    pub constellation: Constellation,
    pub layout: FrameLayout,
}

impl LinkModel {
    pub fn new(cfg: &LinkConfig) -> Result<Self, PipelineError> {
        let mut cfg = cfg.clone();
        cfg.resolve();
        cfg.validate()?;
        let constellation = cfg.constellation()?;
        let reference_rms = (2.0 * constellation.moments().va).sqrt();
        let layout = FrameLayout::new(cfg.tx.frame_length, cfg.tx.pilot_gain_db, reference_rms, cfg.tx.pilot_seed)?;
        Ok(Self { cfg, constellation, layout })
    }

    fn data(&self, seed: u64) -> DualPol<Vec<Complex64>> {
        let q = self.cfg.tx.frame_length / 2;
        DualPol::new(
            quadrature_means(&self.constellation.sample_stream(q, seed, 0)),
            quadrature_means(&self.constellation.sample_stream(q, seed, 1)),
        )
    }

    /// Simulate frame `frame` end to end up to parameter estimation.
    pub fn frame(&self, frame: usize) -> Result<FrameData, PipelineError> {
        match self.cfg.mode {
            Mode::Symbol => self.symbol_frame(frame),
            Mode::Waveform => self.waveform_frame(frame),
        }
    }

    fn symbol_frame(&self, frame: usize) -> Result<FrameData, PipelineError> {
        let cfg = &self.cfg;
        let seed = frame_seed(cfg.seed, frame as u64);
        let x = self.data(seed);
        let y = channel::propagate_symbols_with(Execution::Serial, &x, &cfg.channel, &cfg.detector, seed)?;
        let g = cfg.detector.raw_gain;
        let raw = y.map(|v| v.iter().map(|s| s * g).collect::<Vec<_>>());
        let n = cfg.calibration.capture_samples;
        let lo = channel::symbol_capture(&cfg.detector, n, seed, CaptureKind::LoOnly);
        let dark = channel::symbol_capture(&cfg.detector, n, seed, CaptureKind::Dark);
        let cal = calibration::calibrate(&calibration::quadratures(&lo), &calibration::quadratures(&dark))
            .map_err(|source| PipelineError::Calibration { frame, source })?;
        self.finish(frame, x, cal.to_snu(&raw), cal, None, None)
    }

    fn waveform_frame(&self, frame: usize) -> Result<FrameData, PipelineError> {
        let cfg = &self.cfg;
        let tx = &cfg.tx;
        let seed = frame_seed(cfg.seed, frame as u64);
        let x = self.data(seed);
        let framed = txdsp::build_frame(&x, &self.layout)?;
        let w = txdsp::pulse_shape_upconvert(&framed, tx.rolloff, tx.span, tx.dac_rate, tx.symbol_rate, tx.shift)?;
        let w = txdsp::dac_model(&w, tx.dac_bits, tx.dac_clip)?;
        let parts = channel::waveform_parts(&w, &cfg.channel, &cfg.detector, seed)?;
        let captured = channel::adc(&parts.total(), &cfg.detector);
        let rx_err = |source| PipelineError::Rx { frame, source };
        let rx = rxdsp::receive_frame(&captured, &self.layout, &cfg.rx).map_err(rx_err)?;

        let n = captured.len();
        let lo =
            rx.apply_operator(&channel::lo_only_capture(&cfg.detector, n, seed), &cfg.rx, false).map_err(rx_err)?;
        let dark = rx.apply_operator(&channel::dark_capture(&cfg.detector, n, seed), &cfg.rx, false).map_err(rx_err)?;
        let cal = calibration::calibrate(&calibration::quadratures(&lo), &calibration::quadratures(&dark))
            .map_err(|source| PipelineError::Calibration { frame, source })?;

        let y = rxdsp::demux(&rx.symbols, &self.layout).map_err(rx_err)?.quantum;
        let sig = rx.apply_operator(&parts.component(&parts.signal), &cfg.rx, true).map_err(rx_err)?;
        let sig = cal.to_snu(&rxdsp::demux(&sig, &self.layout).map_err(rx_err)?.quantum);
        let dsp_excess = residual_after_fit(&evens(&x), &evens(&sig));
        self.finish(frame, x, cal.to_snu(&y), cal, Some(rx.sync.metric), Some(dsp_excess))
    }

    fn finish(
        &self,
        frame: usize,
        x: DualPol<Vec<Complex64>>,
        y: DualPol<Vec<Complex64>>,
        cal: NoiseCalibration,
        sync_metric: Option<f64>,
        dsp_excess: Option<f64>,
    ) -> Result<FrameData, PipelineError> {
        let (x, y) = (evens(&x), evens(&y));
        let est = calibration::estimate(&x, &y, &cal).map_err(|source| PipelineError::Calibration { frame, source })?;
        let wc = calibration::worst_case(&est, self.cfg.security.eps_pe, self.cfg.constellation.va);
        let estimate = FrameEstimate {
            frame,
            time_s: (frame + 1) as f64 * self.cfg.tx.frame_length as f64 / self.cfg.tx.symbol_rate,
            t_hat: est.t_hat,
            xi_b_hat: est.xi_b_hat,
            t_min: wc.t_min,
            xi_b_max: wc.xi_b_max,
            v_el_hat: cal.v_el_hat,
            n0: cal.n0,
            n_est: est.n_est,
            snr_db: snr_db(&est),
            sync_metric,
            dsp_excess,
        };
        Ok(FrameData { estimate, x, y, calibration: cal })
    }
}

/// Per-quadrature SNR of an estimate in dB.
pub fn snr_db(est: &EstimatedParams) -> f64 {
    10.0 * (est.t_hat * est.t_hat * est.va_hat / est.residual_var).log10()
}

/// Parameter-estimation half: even-indexed quantum symbols.
fn evens(s: &DualPol<Vec<Complex64>>) -> DualPol<Vec<Complex64>> {
    s.as_ref().map(|v| v.iter().step_by(2).copied().collect::<Vec<_>>())
}

/// Residual variance per real of `y − t·x` after a least-squares fit of `t`.
fn residual_after_fit(x: &DualPol<Vec<Complex64>>, y: &DualPol<Vec<Complex64>>) -> f64 {
    let xs = calibration::quadratures(x);
    let ys = calibration::quadratures(y);
    let t = xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / xs.iter().map(|a| a * a).sum::<f64>();
    xs.iter().zip(&ys).map(|(a, b)| (b - t * a).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Simulate `frames` frames; frame results do not depend on `exec`.
pub fn simulate_frames(exec: Execution, cfg: &LinkConfig, frames: usize) -> Result<Vec<FrameData>, PipelineError> {
    let model = LinkModel::new(cfg)?;
    par::map_indexed(exec, frames, |f| model.frame(f)).into_iter().collect()
}

/// Outcome of a complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRun {
    pub frames: Vec<FrameEstimate>,
    /// Estimate over the pooled parameter-estimation symbols of all frames.
    pub pooled: EstimatedParams,
    pub pooled_snr_db: f64,
    /// Mean DSP-induced excess noise over frames (waveform mode).
    pub dsp_excess: Option<f64>,
    pub report: SkrReport,
}

pub fn run_link(exec: Execution, cfg: &LinkConfig) -> Result<LinkRun, PipelineError> {
    let model = LinkModel::new(cfg)?;
    let cfg = &model.cfg;
    let data: Vec<FrameData> =
        par::map_indexed(exec, cfg.frames, |f| model.frame(f)).into_iter().collect::<Result<_, _>>()?;
    let cat = |f: fn(&FrameData) -> &DualPol<Vec<Complex64>>| {
        let mut out = DualPol::new(Vec::new(), Vec::new());
        for d in &data {
            out.x.extend_from_slice(&f(d).x);
            out.y.extend_from_slice(&f(d).y);
        }
        out
    };
    let (x, y) = (cat(|d| &d.x), cat(|d| &d.y));
    let v_el = data.iter().map(|d| d.calibration.v_el_hat).sum::<f64>() / data.len() as f64;
    let pooled = calibration::estimate(&x, &y, &NoiseCalibration::ideal(v_el))
        .map_err(|source| PipelineError::Calibration { frame: data.len(), source })?;
    let excess: Vec<f64> = data.iter().filter_map(|d| d.estimate.dsp_excess).collect();
    let dsp_excess = (!excess.is_empty()).then(|| excess.iter().sum::<f64>() / excess.len() as f64);
    let params = cfg.estimated_security(&pooled)?;
    let report = security::skr(&params, &model.constellation)?;
    Ok(LinkRun {
        frames: data.into_iter().map(|d| d.estimate).collect(),
        pooled_snr_db: snr_db(&pooled),
        pooled,
        dsp_excess,
        report,
    })
}

/// Shot-noise calibration from raw ADC captures at the configured detector.
pub fn calibrate_detector(cfg: &LinkConfig) -> Result<NoiseCalibration, PipelineError> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    cfg.detector.validate()?;
    let n = cfg.calibration.capture_samples;
    let lo = channel::real_samples(&channel::lo_only_capture(&cfg.detector, n, cfg.seed));
    let dark = channel::real_samples(&channel::dark_capture(&cfg.detector, n, cfg.seed));
    calibration::calibrate(&lo, &dark).map_err(|source| PipelineError::Calibration { frame: 0, source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub frame: usize,
    pub time_s: f64,
    pub t_hat: f64,
    pub xi_b_hat: f64,
    pub running_mean: f64,
    pub v_el_hat: f64,
}

/// Per-frame excess-noise estimates and their running mean.
pub fn noise_timeseries(exec: Execution, cfg: &LinkConfig, frames: usize) -> Result<Vec<TimeseriesRow>, PipelineError> {
    let data = simulate_frames(exec, cfg, frames)?;
    let mut sum = 0.0;
    Ok(data
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let e = &d.estimate;
            sum += e.xi_b_hat;
            TimeseriesRow {
                frame: e.frame,
                time_s: e.time_s,
                t_hat: e.t_hat,
                xi_b_hat: e.xi_b_hat,
                running_mean: sum / (i + 1) as f64,
                v_el_hat: e.v_el_hat,
            }
        })
        .collect())
}
