//! Fiber link and coherent receiver front-end.
//!
//! Two fidelity levels share one noise model. At symbol level each quadrature
//! obeys `y = t·x + z` with `t² = η·T/2` (phase-diverse detection splits the
//! signal between both quadratures) and `Var z = 1 + v_el + t²·ξ_A` SNU. The
//! waveform level applies the same budget to sampled analog streams and adds
//! polarisation rotation, phase drift, timing offset, resampling and the ADC.
//!
//! In waveform units the received field is scaled by `√(T·η)` and one SNU of
//! shot noise corresponds to a per-real-sample variance of
//! `2·(adc_rate / symbol_rate)·raw_gain²`. The factor 2 is the vacuum unit
//! the phase-diverse receiver adds on top of the field, so after a matched
//! filter and division by the calibrated shot-noise level the symbol-level
//! model `y = t·x + z` is recovered exactly.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError};
use crate::par::{self, Execution};
use crate::rng::{stream_rng, Stream};
use crate::txdsp::{self, Waveform};
use crate::types::DualPol;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter: {0}")]
    InvalidParams(String),
    #[error("waveform rate {input} Hz cannot be resampled to the ADC rate {adc} Hz")]
    SampleRateMismatch { input: f64, adc: f64 },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub distance_km: f64,
    pub atten_db_per_km: f64,
    /// Excess noise referred to the channel input, SNU per quadrature.
    pub xi_a: f64,
    /// Excess noise referred to Bob's input, SNU. When set it replaces `xi_a`.
    pub xi_b: Option<f64>,
    /// Residual laser phase random walk, rad per √symbol.
    pub phase_drift_std: f64,
    /// Jones rotation angle θ (rad).
    pub pol_angle: f64,
    /// Jones rotation phase φ (rad).
    pub pol_phase: f64,
    /// Delay in samples of the input waveform; fractional parts are interpolated.
    pub timing_offset: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            distance_km: 25.2,
            atten_db_per_km: 0.2,
            xi_a: 0.0,
            xi_b: None,
            phase_drift_std: 1e-3,
            pol_angle: 0.0,
            pol_phase: 0.0,
            timing_offset: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn transmittance(&self) -> f64 {
        transmittance(self.distance_km, self.atten_db_per_km)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidParams(m.to_string()));
        if !(self.distance_km >= 0.0) {
            return bad("distance must be non-negative");
        }
        if !(self.atten_db_per_km >= 0.0) {
            return bad("attenuation must be non-negative");
        }
        if !(self.xi_a >= 0.0) || self.xi_b.is_some_and(|x| !(x >= 0.0)) {
            return bad("excess noise must be non-negative");
        }
        if !(self.phase_drift_std >= 0.0) {
            return bad("phase drift must be non-negative");
        }
        if !(self.timing_offset >= 0.0) {
            return bad("timing offset must be non-negative");
        }
        Ok(())
    }

    /// Input-referred excess noise `ξ_A`, resolving `xi_b` through `t² = η·T/2`.
    pub fn resolved_xi_a(&self, det: &DetectorParams) -> f64 {
        match self.xi_b {
            Some(xb) => xb / (det.eta * self.transmittance() / 2.0),
            None => self.xi_a,
        }
    }

    /// Jones matrix `[[cos θ, -e^{-iφ} sin θ], [e^{iφ} sin θ, cos θ]]`.
    pub fn jones(&self) -> [[Complex64; 2]; 2] {
        let (s, c) = self.pol_angle.sin_cos();
        let e = Complex64::from_polar(1.0, self.pol_phase);
        [[Complex64::new(c, 0.0), -e.conj() * s], [e * s, Complex64::new(c, 0.0)]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub eta: f64,
    /// Electronic noise, SNU per quadrature.
    pub v_el: f64,
    pub adc_bits: u32,
    pub adc_rate: f64,
    /// ADC full scale as a multiple of the captured stream's RMS.
    pub clip_scale: f64,
    /// Symbol rate the noise budget is referred to. Set by the link, not read from files.
    #[serde(skip)]
    pub symbol_rate: f64,
    /// Unknown scale between SNU amplitudes and ADC units.
    pub raw_gain: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            eta: 0.7,
            v_el: 0.34,
            adc_bits: 14,
            adc_rate: 2e9,
            clip_scale: 4.0,
            symbol_rate: 250e6,
            raw_gain: 0.0137,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ChannelError::InvalidParams("eta must lie in (0, 1]".into()));
        }
        if !(self.v_el >= 0.0) {
            return Err(ChannelError::InvalidParams("electronic noise must be non-negative".into()));
        }
        if !(4..=16).contains(&self.adc_bits) {
            return Err(ChannelError::InvalidParams("ADC bits must lie in 4..=16".into()));
        }
        if !(self.raw_gain > 0.0 && self.clip_scale > 0.0 && self.adc_rate > 0.0 && self.symbol_rate > 0.0) {
            return Err(ChannelError::InvalidParams("rates, gain and clip scale must be positive".into()));
        }
        Ok(())
    }

    /// Per-real-sample variance at the ADC corresponding to one SNU, before raw gain.
    pub fn snu_sample_variance(&self) -> f64 {
        2.0 * self.adc_rate / self.symbol_rate
    }
}

/// Fiber power transmittance `10^(-α·L/10)`.
pub fn transmittance(distance_km: f64, atten_db_per_km: f64) -> f64 {
    10f64.powf(-atten_db_per_km * distance_km / 10.0)
}

/// Quadrature gain `t = √(η·T/2)` of the symbol-level model.
pub fn symbol_gain(ch: &ChannelParams, det: &DetectorParams) -> f64 {
    (det.eta * ch.transmittance() / 2.0).sqrt()
}

/// Total noise variance per quadrature at Bob, SNU.
pub fn noise_variance(ch: &ChannelParams, det: &DetectorParams) -> f64 {
    let t = symbol_gain(ch, det);
    1.0 + det.v_el + t * t * ch.resolved_xi_a(det)
}

const CHUNK: usize = 1 << 16;

fn gaussian_fill<R: Rng>(rng: &mut R, out: &mut [Complex64], std: f64) {
    for z in out {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(re * std, im * std);
    }
}

/// Symbol-level channel: `y = t·x + z` per quadrature, output in SNU.
///
/// `tx` holds quadrature means (`2α`). Noise is drawn in chunks of 65536
/// symbols from per-chunk streams, so serial and parallel runs agree.
pub fn propagate_symbols(
    tx: &DualPol<Vec<Complex64>>,
    ch: &ChannelParams,
    det: &DetectorParams,
    seed: u64,
) -> Result<DualPol<Vec<Complex64>>, ChannelError> {
    propagate_symbols_with(Execution::default(), tx, ch, det, seed)
}

pub fn propagate_symbols_with(
    exec: Execution,
    tx: &DualPol<Vec<Complex64>>,
    ch: &ChannelParams,
    det: &DetectorParams,
    seed: u64,
) -> Result<DualPol<Vec<Complex64>>, ChannelError> {
    ch.validate()?;
    det.validate()?;
    let t = symbol_gain(ch, det);
    let std = noise_variance(ch, det).sqrt();
    let run = |pol: u64, x: &[Complex64]| {
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        par::for_each_chunk_mut(exec, &mut y, CHUNK, |i, out| {
            let mut rng = stream_rng(seed, Stream::ChannelNoise, 2 * i as u64 + pol);
            gaussian_fill(&mut rng, out, std);
            for (o, xi) in out.iter_mut().zip(&x[i * CHUNK..]) {
                *o += xi * t;
            }
        });
        y
    };
    Ok(DualPol::new(run(0, &tx.x), run(1, &tx.y)))
}

/// Waveform-level channel output split into its linear components at the
/// ADC rate, before quantisation. The ADC sees `raw_gain·(signal + noise)`.
#[derive(Debug, Clone)]
pub struct WaveformParts {
    pub signal: DualPol<Vec<Complex64>>,
    pub noise: DualPol<Vec<Complex64>>,
    pub sample_rate: f64,
    pub center_offset: f64,
    pub raw_gain: f64,
}

impl WaveformParts {
    /// Raw-unit waveform of a single component (signal only, say).
    pub fn component(&self, c: &DualPol<Vec<Complex64>>) -> Waveform {
        let g = self.raw_gain;
        Waveform {
            pol_x: c.x.iter().map(|s| s * g).collect(),
            pol_y: c.y.iter().map(|s| s * g).collect(),
            sample_rate: self.sample_rate,
            center_offset: self.center_offset,
        }
    }

    pub fn total(&self) -> Waveform {
        let g = self.raw_gain;
        let sum = |s: &[Complex64], n: &[Complex64]| s.iter().zip(n).map(|(a, b)| (a + b) * g).collect();
        Waveform {
            pol_x: sum(&self.signal.x, &self.noise.x),
            pol_y: sum(&self.signal.y, &self.noise.y),
            sample_rate: self.sample_rate,
            center_offset: self.center_offset,
        }
    }
}

/// Apply the analog channel and return its signal and noise components.
pub fn waveform_parts(
    w: &Waveform,
    ch: &ChannelParams,
    det: &DetectorParams,
    seed: u64,
) -> Result<WaveformParts, ChannelError> {
    ch.validate()?;
    det.validate()?;
    if w.sample_rate < det.adc_rate {
        return Err(ChannelError::SampleRateMismatch { input: w.sample_rate, adc: det.adc_rate });
    }
    let decim = dsp::integer_ratio(w.sample_rate, det.adc_rate)
        .map_err(|_| ChannelError::SampleRateMismatch { input: w.sample_rate, adc: det.adc_rate })?;
    let sps_in = w.sample_rate / det.symbol_rate;

    let amp = (ch.transmittance() * det.eta).sqrt();
    let j = ch.jones();
    let n = w.len();
    let mut sx = Vec::with_capacity(n);
    let mut sy = Vec::with_capacity(n);
    let mut phase = 0.0;
    let step_std = ch.phase_drift_std / sps_in.sqrt();
    let mut prng = stream_rng(seed, Stream::PhaseDrift, 0);
    for (a, b) in w.pol_x.iter().zip(&w.pol_y) {
        if step_std > 0.0 {
            let d: f64 = prng.sample(StandardNormal);
            phase += d * step_std;
        }
        let rot = Complex64::from_polar(amp, phase);
        sx.push((j[0][0] * a + j[0][1] * b) * rot);
        sy.push((j[1][0] * a + j[1][1] * b) * rot);
    }

    let delay = |s: Vec<Complex64>| -> Vec<Complex64> {
        let whole = ch.timing_offset.floor() as usize;
        let frac = ch.timing_offset - whole as f64;
        let s = if frac > 1e-12 { dsp::filter_same(&s, &dsp::fractional_delay_taps(frac, 32)) } else { s };
        let mut out = vec![Complex64::new(0.0, 0.0); whole];
        out.extend(s);
        out
    };
    let signal = DualPol::new(delay(sx), delay(sy)).map(|s| s.into_iter().step_by(decim).collect::<Vec<_>>());

    let len = signal.x.len();
    let per_real = det.snu_sample_variance() * noise_variance(ch, det);
    let std = per_real.sqrt();
    let draw = |pol: u64| {
        let mut z = vec![Complex64::new(0.0, 0.0); len];
        for (i, chunk) in z.chunks_mut(CHUNK).enumerate() {
            let mut rng = stream_rng(seed, Stream::ChannelNoise, 2 * i as u64 + pol);
            gaussian_fill(&mut rng, chunk, std);
        }
        z
    };
    let noise = DualPol::new(draw(0), draw(1));
    Ok(WaveformParts {
        signal,
        noise,
        sample_rate: det.adc_rate,
        center_offset: w.center_offset,
        raw_gain: det.raw_gain,
    })
}

/// Signal through the channel, detected and digitised by the ADC.
pub fn propagate_waveform(
    w: &Waveform,
    ch: &ChannelParams,
    det: &DetectorParams,
    seed: u64,
) -> Result<Waveform, ChannelError> {
    let parts = waveform_parts(w, ch, det, seed)?;
    Ok(adc(&parts.total(), det))
}

/// ADC clipping and quantisation at `clip_scale·RMS` full scale.
pub fn adc(w: &Waveform, det: &DetectorParams) -> Waveform {
    let rms = w.real_rms();
    if rms == 0.0 {
        return w.clone();
    }
    txdsp::quantize_waveform(w, det.adc_bits, det.clip_scale * rms)
}

fn noise_capture(det: &DetectorParams, n: usize, seed: u64, stream: Stream, snu: f64) -> Waveform {
    let std = (det.snu_sample_variance() * snu).sqrt() * det.raw_gain;
    let draw = |pol: u64| {
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = stream_rng(seed, stream, pol);
        if std > 0.0 {
            gaussian_fill(&mut rng, &mut z, std);
        }
        z
    };
    let w = Waveform { pol_x: draw(0), pol_y: draw(1), sample_rate: det.adc_rate, center_offset: 0.0 };
    adc(&w, det)
}

/// Optical switch closed on the LO only: shot plus electronic noise.
pub fn lo_only_capture(det: &DetectorParams, n: usize, seed: u64) -> Waveform {
    noise_capture(det, n, seed, Stream::LoCapture, 1.0 + det.v_el)
}

/// LO and signal both blocked: electronic noise only.
pub fn dark_capture(det: &DetectorParams, n: usize, seed: u64) -> Waveform {
    noise_capture(det, n, seed, Stream::DarkCapture, det.v_el)
}

/// Which switch position a calibration capture models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureKind {
    LoOnly,
    Dark,
}

/// Calibration capture at one sample per symbol, in raw units.
///
/// Matches the statistics seen after the matched filter: `raw_gain²·(1+v_el)`
/// per quadrature for LO only and `raw_gain²·v_el` for dark.
pub fn symbol_capture(det: &DetectorParams, n: usize, seed: u64, kind: CaptureKind) -> DualPol<Vec<Complex64>> {
    let (stream, snu) = match kind {
        CaptureKind::LoOnly => (Stream::LoCapture, 1.0 + det.v_el),
        CaptureKind::Dark => (Stream::DarkCapture, det.v_el),
    };
    let std = snu.sqrt() * det.raw_gain;
    let draw = |pol: u64| {
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        let mut rng = stream_rng(seed, stream, 2 + pol);
        gaussian_fill(&mut rng, &mut z, std);
        z
    };
    DualPol::new(draw(0), draw(1))
}

/// Flatten the four real streams `[XI, XQ, YI, YQ]` of a capture.
pub fn real_samples(w: &Waveform) -> Vec<f64> {
    w.pol_x.iter().chain(&w.pol_y).flat_map(|c| [c.re, c.im]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn transmittance_values() {
        assert_eq!(transmittance(0.0, 0.2), 1.0);
        assert!((transmittance(25.2, 0.2) - 0.3133).abs() < 1e-4);
        assert_relative_eq!(transmittance(50.0, 0.2), transmittance(25.0, 0.2).powi(2), max_relative = 1e-12);
    }

    fn ideal() -> (ChannelParams, DetectorParams) {
        let ch = ChannelParams { distance_km: 0.0, xi_a: 0.0, ..Default::default() };
        let det = DetectorParams { eta: 1.0, v_el: 0.0, ..Default::default() };
        (ch, det)
    }

    #[test]
    fn vacuum_case_has_unit_noise() {
        let (ch, det) = ideal();
        let n = 1_000_000;
        let x = DualPol::new(vec![Complex64::new(1.0, -1.0); n], vec![Complex64::new(0.0, 0.0); n]);
        let y = propagate_symbols(&x, &ch, &det, 3).unwrap();
        let t = std::f64::consts::FRAC_1_SQRT_2;
        let z: Vec<f64> =
            y.x.iter()
                .zip(&x.x)
                .flat_map(|(a, b)| {
                    let d = a - b * t;
                    [d.re, d.im]
                })
                .collect();
        assert!((variance(&z) - 1.0).abs() < 0.02);
    }

    #[test]
    fn operating_point_excess_noise() {
        let det = DetectorParams::default();
        let mut ch = ChannelParams::default();
        let t2 = det.eta * ch.transmittance() / 2.0;
        ch.xi_a = 0.005 / t2;
        let n = 5_000_000;
        let x = DualPol::new(vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n]);
        let y = propagate_symbols(&x, &ch, &det, 11).unwrap();
        let z: Vec<f64> = y.x.iter().chain(&y.y).flat_map(|c| [c.re, c.im]).collect();
        let excess = variance(&z) - 1.0 - det.v_el;
        assert!((excess - 0.005).abs() < 0.0005, "excess {excess}");
    }

    #[test]
    fn infinite_loss_decorrelates() {
        let (mut ch, det) = ideal();
        ch.distance_km = 1e6;
        let c = crate::constellation::build_ps_qam(16, 0.0, 4.0).unwrap();
        let n = 1_000_000;
        let x = crate::constellation::quadrature_means(&c.sample_symbols(n, 1));
        let tx = DualPol::new(x.clone(), x.clone());
        let y = propagate_symbols(&tx, &ch, &det, 5).unwrap();
        let sxy: f64 = x.iter().zip(&y.x).map(|(a, b)| a.re * b.re).sum();
        let sxx: f64 = x.iter().map(|a| a.re * a.re).sum();
        let syy: f64 = y.x.iter().map(|a| a.re * a.re).sum();
        assert!((sxy / (sxx * syy).sqrt()).abs() < 5e-3);
    }

    #[test]
    fn seeds_are_reproducible_and_serial_matches_parallel() {
        let ch = ChannelParams::default();
        let det = DetectorParams::default();
        let x = DualPol::new(vec![Complex64::new(1.0, 0.0); 200_000], vec![Complex64::new(0.0, 1.0); 200_000]);
        let a = propagate_symbols_with(Execution::Serial, &x, &ch, &det, 9).unwrap();
        let b = propagate_symbols_with(Execution::Parallel, &x, &ch, &det, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capture_variance_ratio() {
        let det = DetectorParams::default();
        let lo = real_samples(&lo_only_capture(&det, 500_000, 1));
        let dark = real_samples(&dark_capture(&det, 500_000, 1));
        let ratio = variance(&lo) / variance(&dark);
        assert!((ratio / (1.34 / 0.34) - 1.0).abs() < 0.05);
        let clearance_db = 10.0 * (1.34f64 / 0.34).log10();
        assert!((clearance_db - 5.96).abs() < 0.01);
    }

    #[test]
    fn dark_capture_without_electronic_noise_is_silent() {
        let det = DetectorParams { v_el: 0.0, ..Default::default() };
        assert!(real_samples(&dark_capture(&det, 1000, 1)).iter().all(|&v| v == 0.0));
    }

    fn tone(n: usize) -> Waveform {
        Waveform {
            pol_x: (0..n).map(|k| Complex64::from_polar(1.0, 0.01 * k as f64)).collect(),
            pol_y: (0..n).map(|k| Complex64::from_polar(0.5, -0.02 * k as f64)).collect(),
            sample_rate: 2e9,
            center_offset: 0.0,
        }
    }

    #[test]
    fn energy_is_conserved_without_noise() {
        let ch = ChannelParams { pol_angle: 0.7, pol_phase: 0.3, phase_drift_std: 1e-2, ..Default::default() };
        let det = DetectorParams::default();
        let w = tone(4096);
        let p = waveform_parts(&w, &ch, &det, 1).unwrap();
        let pin = dsp::mean_power(&w.pol_x) + dsp::mean_power(&w.pol_y);
        let pout = dsp::mean_power(&p.signal.x) + dsp::mean_power(&p.signal.y);
        let expect = ch.transmittance() * det.eta * pin;
        assert!((pout / expect - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quarter_turn_swaps_polarisations() {
        let ch = ChannelParams {
            distance_km: 0.0,
            phase_drift_std: 0.0,
            pol_angle: std::f64::consts::FRAC_PI_2,
            ..Default::default()
        };
        let det = DetectorParams { eta: 1.0, ..Default::default() };
        let w = tone(256);
        let p = waveform_parts(&w, &ch, &det, 1).unwrap();
        for k in 0..256 {
            assert!((p.signal.x[k] + w.pol_y[k]).norm() < 1e-12);
            assert!((p.signal.y[k] - w.pol_x[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let mut w = tone(16);
        w.sample_rate = 3e9;
        let e = waveform_parts(&w, &ChannelParams::default(), &DetectorParams::default(), 1);
        assert!(matches!(e, Err(ChannelError::SampleRateMismatch { .. })));
        w.sample_rate = 1e9;
        let e = waveform_parts(&w, &ChannelParams::default(), &DetectorParams::default(), 1);
        assert!(matches!(e, Err(ChannelError::SampleRateMismatch { .. })));
    }
}
