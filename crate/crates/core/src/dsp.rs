//! Filter primitives shared by the transmit and receive chains.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("roll-off must lie in (0, 1], got {0}")]
    InvalidRolloff(f64),
    #[error("filter span must be a positive even number of symbols, got {0}")]
    InvalidSpan(usize),
    #[error("at least 2 samples per symbol are required, got {0}")]
    InvalidSps(usize),
    #[error("sample rate {rate} Hz is not an integer multiple of {base} Hz")]
    RateMismatch { rate: f64, base: f64 },
}

/// Root-raised-cosine impulse response with `span * sps + 1` taps and unit energy.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Result<Vec<f64>, DspError> {
    if !(rolloff > 0.0 && rolloff <= 1.0) {
        return Err(DspError::InvalidRolloff(rolloff));
    }
    if sps < 2 {
        return Err(DspError::InvalidSps(sps));
    }
    if span == 0 || !span.is_multiple_of(2) {
        return Err(DspError::InvalidSpan(span));
    }
    let n = span * sps + 1;
    let half = (n / 2) as isize;
    let b = rolloff;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            rrc_at(t, b)
        })
        .collect();
    let energy: f64 = taps.iter().map(|x| x * x).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|x| *x /= norm);
    Ok(taps)
}

/// Continuous RRC pulse at time `t` in symbol periods.
fn rrc_at(t: f64, b: f64) -> f64 {
    let singular = 1.0 / (4.0 * b);
    if t.abs() < 1e-12 {
        1.0 - b + 4.0 * b / PI
    } else if ((t.abs() - singular) / singular).abs() < 1e-9 {
        let arg = PI / (4.0 * b);
        b / 2f64.sqrt() * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos())
    } else {
        let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
        let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
        num / den
    }
}

/// Integer ratio `rate / base`, or an error when it is not integral.
pub fn integer_ratio(rate: f64, base: f64) -> Result<usize, DspError> {
    let r = rate / base;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(DspError::RateMismatch { rate, base });
    }
    Ok(n as usize)
}

/// FFT-based linear convolution of a complex signal with real taps.
///
/// Returns the full `signal.len() + taps.len() - 1` output. Uses overlap-save
/// so cost grows linearly with the signal length.
pub fn convolve(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    if signal.is_empty() || taps.is_empty() {
        return Vec::new();
    }
    let m = taps.len();
    let out_len = signal.len() + m - 1;
    if m <= 32 || signal.len() <= 64 {
        return convolve_direct(signal, taps);
    }
    let fft_len = (4 * m).next_power_of_two().max(1024);
    let step = fft_len - (m - 1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(fft_len);
    let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(fft_len);

    let mut h: Vec<Complex64> = taps.iter().map(|&t| Complex64::new(t, 0.0)).collect();
    h.resize(fft_len, Complex64::new(0.0, 0.0));
    fwd.process(&mut h);
    let scale = 1.0 / fft_len as f64;

    let mut out = Vec::with_capacity(out_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    // Output sample j uses inputs j-m+1..=j. Block b produces outputs b*step .. b*step+step.
    let mut start = 0usize;
    while start < out_len {
        for (k, slot) in buf.iter_mut().enumerate() {
            let idx = start as isize + k as isize - (m as isize - 1);
            *slot =
                if idx >= 0 && (idx as usize) < signal.len() { signal[idx as usize] } else { Complex64::new(0.0, 0.0) };
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&h).for_each(|(b, h)| *b *= h * scale);
        inv.process(&mut buf);
        let take = step.min(out_len - start);
        out.extend_from_slice(&buf[m - 1..m - 1 + take]);
        start += step;
    }
    out
}

fn convolve_direct(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let m = taps.len();
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len() + m - 1];
    for (i, s) in signal.iter().enumerate() {
        for (j, t) in taps.iter().enumerate() {
            out[i + j] += s * *t;
        }
    }
    out
}

/// Convolution trimmed to the input length with the group delay of an
/// odd-length symmetric filter removed.
pub fn filter_same(signal: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let delay = (taps.len() - 1) / 2;
    let full = convolve(signal, taps);
    full[delay..delay + signal.len()].to_vec()
}

/// Blackman-windowed sinc taps delaying a signal by `frac` samples (|frac| < 1).
pub fn fractional_delay_taps(frac: f64, half_len: usize) -> Vec<f64> {
    let n = 2 * half_len + 1;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 - half_len as f64 - frac;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let w_arg = 2.0 * PI * (i as f64 - frac) / (n - 1) as f64;
            let window = 0.42 - 0.5 * w_arg.cos() + 0.08 * (2.0 * w_arg).cos();
            sinc * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Multiply `signal` by `exp(i·2π·freq·n/rate)`.
pub fn mix(signal: &[Complex64], freq: f64, rate: f64) -> Vec<Complex64> {
    if freq == 0.0 {
        return signal.to_vec();
    }
    let w = 2.0 * PI * freq / rate;
    signal.iter().enumerate().map(|(n, s)| s * Complex64::from_polar(1.0, w * n as f64)).collect()
}

pub fn mean_power(signal: &[Complex64]) -> f64 {
    if signal.is_empty() {
        return 0.0;
    }
    signal.iter().map(|s| s.norm_sqr()).sum::<f64>() / signal.len() as f64
}
