//! Receiver chain: down-conversion, matched filtering, pilot frame sync,
//! a pilot-trained 2×2 butterfly equaliser, pilot-aided carrier phase
//! estimation and pilot/data demultiplexing.
//!
//! The equaliser adapts only on pilot slots. Its taps are then frozen and
//! applied to every slot, which makes the complete receiver a fixed linear
//! operator per frame: the same operator is applied to the calibration
//! captures so that the shot-noise reference matches the data exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, DspError};
use crate::txdsp::{FrameLayout, Waveform};
use crate::types::DualPol;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, PartialEq)]
pub enum RxError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("frame sync failed: peak ratio {metric:.2} below threshold {threshold}")]
    SyncFailure { metric: f64, threshold: f64 },
    #[error("baseband of {len} samples is shorter than one frame ({needed} samples)")]
    TooShort { len: usize, needed: usize },
    #[error("equaliser diverged at pilot {pilot}")]
    EqualizerDiverged { pilot: usize },
    #[error("{len} symbols do not form whole frames of {frame}")]
    Misaligned { len: usize, frame: usize },
    #[error("invalid receiver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EqualizerConfig {
    pub n_taps: usize,
    pub mu_lms: f64,
    pub mu_cma: f64,
    /// Pilot slots trained data-aided before switching to constant modulus.
    pub lms_symbols: usize,
    pub taps_spacing: usize,
    /// Freeze the mean of the taps over this trailing fraction of training
    /// rather than the last iterate, which suppresses gradient noise.
    pub average_tail: f64,
    pub second_stage: SecondStage,
    /// Loop gain of the phase tracker running inside the data-aided stage.
    pub pll_gain: f64,
}

impl Default for EqualizerConfig {
    fn default() -> Self {
        Self {
            n_taps: 11,
            mu_lms: 3e-4,
            mu_cma: 3e-5,
            lms_symbols: 4000,
            taps_spacing: 2,
            average_tail: 0.5,
            second_stage: SecondStage::Cma,
            pll_gain: 0.05,
        }
    }
}

impl EqualizerConfig {
    pub fn validate(&self) -> Result<(), RxError> {
        if self.n_taps.is_multiple_of(2) {
            return Err(RxError::InvalidConfig("n_taps must be odd".into()));
        }
        if !(self.mu_lms >= 0.0 && self.mu_cma >= 0.0) {
            return Err(RxError::InvalidConfig("step sizes must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.average_tail) {
            return Err(RxError::InvalidConfig("average_tail must lie in [0, 1]".into()));
        }
        if self.taps_spacing != 2 {
            return Err(RxError::InvalidConfig("only half-symbol tap spacing is supported".into()));
        }
        Ok(())
    }
}

/// Update rule after the first `lms_symbols` pilots. Both run at `mu_cma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SecondStage {
    /// Constant modulus on the pilot slots.
    #[default]
    Cma,
    /// Keep the data-aided update with the smaller step.
    Lms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpeConfig {
    /// Moving-average half-width in pilots.
    pub window: usize,
    pub interpolation: Interpolation,
}

impl Default for CpeConfig {
    fn default() -> Self {
        Self { window: 64, interpolation: Interpolation::Linear }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RxConfig {
    pub rolloff: f64,
    pub span: usize,
    pub shift: f64,
    /// Set by the link from the transmitter's rate, not read from files.
    #[serde(skip)]
    pub symbol_rate: f64,
    pub sync_threshold: f64,
    pub equalizer: EqualizerConfig,
    pub cpe: CpeConfig,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            rolloff: 0.1,
            span: 128,
            shift: 300e6,
            symbol_rate: 250e6,
            sync_threshold: 3.0,
            equalizer: EqualizerConfig::default(),
            cpe: CpeConfig::default(),
        }
    }
}

/// Mix down by `shift`, apply the RRC matched filter and decimate to 2 samples/symbol.
///
/// The filter is the unit-energy RRC divided by `√sps`, so a symbol shaped by
/// [`crate::txdsp::tx_pulse`] comes out with its original amplitude. Output
/// sample `m` corresponds to full-convolution index `m·sps/2`.
pub fn downconvert_matched_filter(
    w: &Waveform,
    shift: f64,
    rolloff: f64,
    span: usize,
    symbol_rate: f64,
) -> Result<DualPol<Vec<Complex64>>, RxError> {
    let sps = dsp::integer_ratio(w.sample_rate, symbol_rate)?;
    if sps % 2 != 0 {
        return Err(DspError::RateMismatch { rate: w.sample_rate, base: 2.0 * symbol_rate }.into());
    }
    let scale = 1.0 / (sps as f64).sqrt();
    let taps: Vec<f64> = dsp::rrc_taps(rolloff, sps, span)?.into_iter().map(|t| t * scale).collect();
    let step = sps / 2;
    let run = |s: &[Complex64]| {
        let base = dsp::mix(s, -shift, w.sample_rate);
        dsp::convolve(&base, &taps).into_iter().step_by(step).collect::<Vec<_>>()
    };
    Ok(DualPol::new(run(&w.pol_x), run(&w.pol_y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    /// 2-sps sample index of the first pilot of the frame.
    pub offset: usize,
    /// Correlation peak over the largest peak outside ±2 samples of it.
    pub metric: f64,
}

/// Locate the pilot comb of one frame in a 2-sps baseband.
///
/// Lags are searched over one frame period, since the pilot sequence repeats
/// every frame. Correlation energy is summed over all four polarisation
/// pairings so an arbitrary polarisation rotation does not hide the peak.
pub fn frame_sync(
    baseband: &DualPol<Vec<Complex64>>,
    layout: &FrameLayout,
    threshold: f64,
) -> Result<SyncResult, RxError> {
    let pilots = layout.pilots_per_frame();
    let tmpl_len = 4 * (pilots - 1) + 1;
    let len = baseband.x.len().min(baseband.y.len());
    if len < tmpl_len + 1 {
        return Err(RxError::TooShort { len, needed: tmpl_len + 1 });
    }
    let lags = (len - tmpl_len + 1).min(2 * layout.frame_length);
    let fft_len = (len + tmpl_len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let spectrum = |v: &[Complex64]| {
        let mut b = v.to_vec();
        b.resize(fft_len, ZERO);
        fwd.process(&mut b);
        b
    };
    let rx = [spectrum(&baseband.x[..len]), spectrum(&baseband.y[..len])];
    let tmpl: Vec<Vec<Complex64>> = (0..2)
        .map(|p| {
            let mut t = vec![ZERO; tmpl_len];
            for i in 0..pilots {
                t[4 * i] = layout.pilot(p, i);
            }
            spectrum(&t)
        })
        .collect();
    let mut energy = vec![0.0; lags];
    for r in &rx {
        for t in &tmpl {
            // corr[τ] = Σ r[τ+n]·conj(t[n]) = IFFT(R·conj(T))[τ]
            let mut c: Vec<Complex64> = r.iter().zip(t).map(|(a, b)| a * b.conj()).collect();
            inv.process(&mut c);
            for (e, v) in energy.iter_mut().zip(&c) {
                *e += v.norm_sqr();
            }
        }
    }
    let (peak, &best) = energy.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let second = energy.iter().enumerate().filter(|(i, _)| i.abs_diff(peak) > 2).map(|(_, &e)| e).fold(0.0, f64::max);
    let metric = if second > 0.0 {
        (best / second).sqrt()
    } else if best > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if !(metric >= threshold) {
        return Err(RxError::SyncFailure { metric, threshold });
    }
    Ok(SyncResult { offset: peak, metric })
}

/// Half-symbol-spaced butterfly: `taps[p][q]` maps input polarisation `q` to output `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButterflyTaps {
    pub taps: [[Vec<Complex64>; 2]; 2],
}

impl ButterflyTaps {
    /// Centre-tap identity with gain `g`.
    pub fn identity(n_taps: usize, g: f64) -> Self {
        let mut diag = vec![ZERO; n_taps];
        diag[n_taps / 2] = Complex64::new(g, 0.0);
        let off = vec![ZERO; n_taps];
        Self { taps: [[diag.clone(), off.clone()], [off, diag]] }
    }

    fn zeros(n: usize) -> Self {
        let z = vec![ZERO; n];
        Self { taps: [[z.clone(), z.clone()], [z.clone(), z]] }
    }

    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.taps.iter_mut().flatten().zip(other.taps.iter().flatten()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scaled(mut self, k: f64) -> Self {
        self.taps.iter_mut().flatten().flatten().for_each(|x| *x *= k);
        self
    }

    pub fn n_taps(&self) -> usize {
        self.taps[0][0].len()
    }

    /// Energy of the cross-polarisation taps relative to the direct ones, in dB.
    pub fn crosstalk_db(&self) -> f64 {
        let e = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let direct = e(&self.taps[0][0]) + e(&self.taps[1][1]);
        let cross = e(&self.taps[0][1]) + e(&self.taps[1][0]);
        10.0 * (cross / direct).log10()
    }

    fn window(u: &DualPol<Vec<Complex64>>, center: usize, n: usize) -> [Vec<Complex64>; 2] {
        let h = n / 2;
        let grab = |s: &[Complex64]| {
            (0..n)
                .map(|j| {
                    let idx = center as isize + j as isize - h as isize;
                    if idx >= 0 && (idx as usize) < s.len() {
                        s[idx as usize]
                    } else {
                        ZERO
                    }
                })
                .collect()
        };
        [grab(&u.x), grab(&u.y)]
    }

    fn output(&self, win: &[Vec<Complex64>; 2]) -> [Complex64; 2] {
        let mut y = [ZERO; 2];
        for (p, yp) in y.iter_mut().enumerate() {
            for q in 0..2 {
                *yp += self.taps[p][q].iter().zip(&win[q]).map(|(w, u)| w * u).sum::<Complex64>();
            }
        }
        y
    }

    /// Apply the frozen taps at symbol centres `offset + 2k`, `k < count`.
    pub fn apply(&self, u: &DualPol<Vec<Complex64>>, offset: usize, count: usize) -> DualPol<Vec<Complex64>> {
        let n = self.n_taps();
        let mut x = Vec::with_capacity(count);
        let mut y = Vec::with_capacity(count);
        for k in 0..count {
            let out = self.output(&Self::window(u, offset + 2 * k, n));
            x.push(out[0]);
            y.push(out[1]);
        }
        DualPol::new(x, y)
    }
}

const RETIME_HALF_LEN: usize = 16;

/// Baseband sample `m + tau` for every `m`, by windowed-sinc interpolation.
pub fn retime(baseband: &DualPol<Vec<Complex64>>, tau: f64) -> DualPol<Vec<Complex64>> {
    if tau.abs() < 1e-12 {
        return baseband.clone();
    }
    let taps = dsp::fractional_delay_taps(-tau, RETIME_HALF_LEN);
    baseband.as_ref().map(|s| dsp::filter_same(s, &taps))
}

/// Sub-sample timing of the pilot comb around a synchronised offset.
///
/// Maximises the pilot correlation energy, summed over polarisation
/// pairings, over `tau ∈ [-1, 1]` samples by golden-section search.
pub fn fine_timing(baseband: &DualPol<Vec<Complex64>>, offset: usize, layout: &FrameLayout) -> f64 {
    let pilots = layout.pilots_per_frame();
    let h = RETIME_HALF_LEN as isize;
    let energy = |tau: f64| -> f64 {
        let taps = dsp::fractional_delay_taps(-tau, RETIME_HALF_LEN);
        let mut corr = [[ZERO; 2]; 2];
        for i in 0..pilots {
            let c = (offset + 4 * i) as isize;
            for (q, s) in [&baseband.x, &baseband.y].into_iter().enumerate() {
                let mut v = ZERO;
                for (j, t) in taps.iter().enumerate() {
                    // filter_same output m is Σ_j taps[j]·s[m + h − j].
                    let idx = c + h - j as isize;
                    if idx >= 0 && (idx as usize) < s.len() {
                        v += s[idx as usize] * *t;
                    }
                }
                for (p, row) in corr.iter_mut().enumerate() {
                    row[q] += v * layout.pilot(p, i).conj();
                }
            }
        }
        corr.iter().flatten().map(|c| c.norm_sqr()).sum()
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-1.0, 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (energy(c), energy(d));
    while b - a > 1e-3 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = energy(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = energy(d);
        }
    }
    (a + b) / 2.0
}

#[derive(Debug, Clone)]
pub struct EqualizerOutput {
    pub symbols: DualPol<Vec<Complex64>>,
    pub taps: ButterflyTaps,
    /// Symbol indices at which the taps were updated.
    pub updated_slots: Vec<usize>,
}

/// Train the butterfly on the pilot slots of a synchronised frame, then
/// apply the frozen taps to all `layout.frame_length` symbol slots.
///
/// The centre taps start at the inverse of the 2×2 pilot response measured
/// at the symbol centres. Training is then normalised LMS against the known
/// pilots, carried at a tracked carrier phase, for the first `lms_symbols`
/// pilots, followed by the configured second stage on the remaining pilots.
///
/// Only pilot slots are trained on, so tap errors that leak the neighbouring
/// boosted pilots into data slots are weakly observable and relax slowly.
/// Small steps and tail averaging keep that leakage far below the shot noise.
pub fn equalize(
    baseband: &DualPol<Vec<Complex64>>,
    offset: usize,
    layout: &FrameLayout,
    eq: &EqualizerConfig,
) -> Result<EqualizerOutput, RxError> {
    eq.validate()?;
    let n = eq.n_taps;
    let pilots = layout.pilots_per_frame();
    let amp = layout.pilot_amplitude();
    let r2 = amp * amp;
    let at = |s: &[Complex64], i: usize| s.get(i).copied().unwrap_or(ZERO);
    // Start from the inverse of the 2×2 pilot response at the symbol centres,
    // so adaptation only refines the taps.
    let mut h = [[ZERO; 2]; 2];
    for i in 0..pilots {
        let c = offset + 4 * i;
        let u = [at(&baseband.x, c), at(&baseband.y, c)];
        for (p, row) in h.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v += u[p] * layout.pilot(q, i).conj();
            }
        }
    }
    let norm = pilots as f64 * r2;
    h.iter_mut().flatten().for_each(|v| *v /= norm);
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let scale = h.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>();
    let mut taps = ButterflyTaps::identity(n, 1.0);
    if det.norm_sqr() > 1e-12 * scale * scale && det.is_finite() {
        let inv = [[h[1][1] / det, -h[0][1] / det], [-h[1][0] / det, h[0][0] / det]];
        for p in 0..2 {
            for q in 0..2 {
                taps.taps[p][q][n / 2] = inv[p][q];
            }
        }
    }
    let mut updated = Vec::with_capacity(pilots);
    let avg_start = pilots - ((pilots as f64 * eq.average_tail).round() as usize).min(pilots);
    let mut sum = ButterflyTaps::zeros(n);
    let mut averaged = 0usize;
    let mut track = [0.0f64; 2];

    for i in 0..pilots {
        if i >= avg_start {
            sum.accumulate(&taps);
            averaged += 1;
        }
        let slot = 2 * i;
        let win = ButterflyTaps::window(baseband, offset + 2 * slot, n);
        let y = taps.output(&win);
        let norm: f64 = win.iter().flatten().map(|c| c.norm_sqr()).sum();
        if norm == 0.0 {
            continue;
        }
        let data_aided = i < eq.lms_symbols || eq.second_stage == SecondStage::Lms;
        let (mu, err) = if data_aided {
            // Compare against the pilot carried at the tracked phase so that
            // carrier drift does not appear as tap-gradient noise.
            let d = [0, 1].map(|p| layout.pilot(p, i) * Complex64::from_polar(1.0, track[p]));
            for p in 0..2 {
                track[p] += eq.pll_gain * (y[p] * d[p].conj()).arg();
            }
            let mu = if i < eq.lms_symbols { eq.mu_lms } else { eq.mu_cma };
            (mu, [d[0] - y[0], d[1] - y[1]])
        } else {
            let e = |v: Complex64| v * ((r2 - v.norm_sqr()) / r2);
            (eq.mu_cma, [e(y[0]), e(y[1])])
        };
        if y[0].norm_sqr() + y[1].norm_sqr() > 200.0 * r2 || !y[0].is_finite() || !y[1].is_finite() {
            return Err(RxError::EqualizerDiverged { pilot: i });
        }
        if mu == 0.0 {
            continue;
        }
        let scale = mu / norm;
        for (p, e) in err.iter().enumerate() {
            for q in 0..2 {
                for (w, u) in taps.taps[p][q].iter_mut().zip(&win[q]) {
                    *w += e * u.conj() * scale;
                }
            }
        }
        updated.push(slot);
    }
    if averaged > 0 {
        sum.accumulate(&taps);
        taps = sum.scaled(1.0 / (averaged + 1) as f64);
    }

    let symbols = taps.apply(baseband, offset, layout.frame_length);
    Ok(EqualizerOutput { symbols, taps, updated_slots: updated })
}

/// Per-slot carrier phase from the pilots of one polarisation.
///
/// Raw pilot phases are unwrapped against the previous estimate, smoothed
/// with a centred moving average of half-width `window` pilots and linearly
/// interpolated onto the data slots between them.
pub fn pilot_phase_track(symbols: &[Complex64], pilot_ref: impl Fn(usize) -> Complex64, cpe: &CpeConfig) -> Vec<f64> {
    let pilots = symbols.len().div_ceil(2);
    if pilots == 0 {
        return Vec::new();
    }
    let mut raw = Vec::with_capacity(pilots);
    let mut prev = 0.0;
    for i in 0..pilots {
        let phi = (symbols[2 * i] * pilot_ref(i).conj()).arg();
        let unwrapped = phi - 2.0 * PI * ((phi - prev) / (2.0 * PI)).round();
        raw.push(unwrapped);
        prev = unwrapped;
    }
    let mut prefix = vec![0.0; pilots + 1];
    for i in 0..pilots {
        prefix[i + 1] = prefix[i] + raw[i];
    }
    let w = cpe.window.max(1);
    let smooth: Vec<f64> = (0..pilots)
        .map(|i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w + 1).min(pilots);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    (0..symbols.len())
        .map(|k| {
            let i = k / 2;
            if k % 2 == 0 || i + 1 >= pilots {
                smooth[i]
            } else {
                match cpe.interpolation {
                    Interpolation::Linear => 0.5 * (smooth[i] + smooth[i + 1]),
                }
            }
        })
        .collect()
}

/// Derotate both polarisations by their pilot phase tracks.
pub fn carrier_phase_estimate(
    symbols: &DualPol<Vec<Complex64>>,
    layout: &FrameLayout,
    cpe: &CpeConfig,
) -> (DualPol<Vec<Complex64>>, DualPol<Vec<f64>>) {
    let phases = DualPol::new(
        pilot_phase_track(&symbols.x, |i| layout.pilot(0, i), cpe),
        pilot_phase_track(&symbols.y, |i| layout.pilot(1, i), cpe),
    );
    let out = DualPol::new(derotate(&symbols.x, &phases.x), derotate(&symbols.y, &phases.y));
    (out, phases)
}

pub fn derotate(s: &[Complex64], phases: &[f64]) -> Vec<Complex64> {
    s.iter().zip(phases).map(|(v, &p)| if p == 0.0 { *v } else { v * Complex64::from_polar(1.0, -p) }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demuxed {
    pub quantum: DualPol<Vec<Complex64>>,
    pub pilots: DualPol<Vec<Complex64>>,
}

/// Split frame-aligned symbols into quantum (odd) and pilot (even) slots.
pub fn demux(symbols: &DualPol<Vec<Complex64>>, layout: &FrameLayout) -> Result<Demuxed, RxError> {
    let split = |s: &[Complex64]| -> Result<(Vec<Complex64>, Vec<Complex64>), RxError> {
        if s.is_empty() || !s.len().is_multiple_of(layout.frame_length) {
            return Err(RxError::Misaligned { len: s.len(), frame: layout.frame_length });
        }
        let pilots = s.iter().step_by(2).copied().collect();
        let quantum = s.iter().skip(1).step_by(2).copied().collect();
        Ok((quantum, pilots))
    };
    let (qx, px) = split(&symbols.x)?;
    let (qy, py) = split(&symbols.y)?;
    Ok(Demuxed { quantum: DualPol::new(qx, qy), pilots: DualPol::new(px, py) })
}

/// One received frame together with the frozen operator that produced it.
#[derive(Debug, Clone)]
pub struct RxFrame {
    /// Phase-corrected symbols, pilots included.
    pub symbols: DualPol<Vec<Complex64>>,
    pub sync: SyncResult,
    /// Sub-sample timing correction applied before equalisation.
    pub timing: f64,
    pub taps: ButterflyTaps,
    pub phases: DualPol<Vec<f64>>,
    pub updated_slots: Vec<usize>,
}

/// Run the full chain on an ADC capture holding one frame.
pub fn receive_frame(adc: &Waveform, layout: &FrameLayout, cfg: &RxConfig) -> Result<RxFrame, RxError> {
    let bb = downconvert_matched_filter(adc, cfg.shift, cfg.rolloff, cfg.span, cfg.symbol_rate)?;
    let sync = frame_sync(&bb, layout, cfg.sync_threshold)?;
    let timing = fine_timing(&bb, sync.offset, layout);
    let eq = equalize(&retime(&bb, timing), sync.offset, layout, &cfg.equalizer)?;
    let (symbols, phases) = carrier_phase_estimate(&eq.symbols, layout, &cfg.cpe);
    Ok(RxFrame { symbols, sync, timing, taps: eq.taps, phases, updated_slots: eq.updated_slots })
}

impl RxFrame {
    /// Push another capture through the same frozen receiver.
    ///
    /// With `derotate_phase` the frame's carrier-phase track is applied too;
    /// noise captures do not need it since their statistics are phase-invariant.
    pub fn apply_operator(
        &self,
        w: &Waveform,
        cfg: &RxConfig,
        derotate_phase: bool,
    ) -> Result<DualPol<Vec<Complex64>>, RxError> {
        let bb =
            retime(&downconvert_matched_filter(w, cfg.shift, cfg.rolloff, cfg.span, cfg.symbol_rate)?, self.timing);
        let out = self.taps.apply(&bb, self.sync.offset, self.symbols.x.len());
        if !derotate_phase {
            return Ok(out);
        }
        Ok(DualPol::new(derotate(&out.x, &self.phases.x), derotate(&out.y, &self.phases.y)))
    }
}
