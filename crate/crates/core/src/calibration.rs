//! Shot-noise calibration and channel parameter estimation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::types::DualPol;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("calibration needs at least {needed} samples per capture, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("LO-only variance {lo} does not exceed dark variance {dark}")]
    Invalid { lo: f64, dark: f64 },
    #[error("Alice and Bob sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("channel estimation failed: gain {t_hat:.3e} is not significantly positive")]
    EstimationFailure { t_hat: f64 },
    #[error("zero channel gain")]
    ZeroGain,
}

pub const MIN_CALIBRATION_SAMPLES: usize = 100_000;
pub const MIN_ESTIMATION_SYMBOLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    /// Raw variance per quadrature of shot noise alone.
    pub n0: f64,
    /// Electronic noise relative to `n0`.
    pub v_el_hat: f64,
    pub samples_used: usize,
}

impl NoiseCalibration {
    /// The calibration of data already expressed in SNU.
    pub fn ideal(v_el: f64) -> Self {
        Self { n0: 1.0, v_el_hat: v_el, samples_used: 0 }
    }

    pub fn scale(&self) -> f64 {
        1.0 / self.n0.sqrt()
    }

    pub fn to_snu(&self, y: &DualPol<Vec<Complex64>>) -> DualPol<Vec<Complex64>> {
        let s = self.scale();
        DualPol::new(y.x.iter().map(|v| v * s).collect(), y.y.iter().map(|v| v * s).collect())
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// `n0 = Var(lo) − Var(dark)`, `v_el = Var(dark) / n0`, from real quadrature samples.
pub fn calibrate(lo: &[f64], dark: &[f64]) -> Result<NoiseCalibration, CalibrationError> {
    let got = lo.len().min(dark.len());
    if got < MIN_CALIBRATION_SAMPLES {
        return Err(CalibrationError::TooFewSamples { got, needed: MIN_CALIBRATION_SAMPLES });
    }
    let (vl, vd) = (variance(lo), variance(dark));
    if !(vl > vd) {
        return Err(CalibrationError::Invalid { lo: vl, dark: vd });
    }
    let n0 = vl - vd;
    Ok(NoiseCalibration { n0, v_el_hat: vd / n0, samples_used: lo.len() + dark.len() })
}

/// Flatten complex samples of both polarisations into real quadratures.
pub fn quadratures(s: &DualPol<Vec<Complex64>>) -> Vec<f64> {
    s.x.iter().chain(&s.y).flat_map(|c| [c.re, c.im]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    /// Quadrature gain, an estimate of `√(η·T/2)`.
    pub t_hat: f64,
    /// Excess noise at Bob per quadrature, SNU. May be negative.
    pub xi_b_hat: f64,
    /// Real quadrature samples used.
    pub n_est: usize,
    pub t_min: f64,
    pub xi_b_max: f64,
    pub eps_pe: f64,
    /// Residual variance `σ̂²` of `y − t̂·x`.
    pub residual_var: f64,
    /// Alice's empirical modulation variance per quadrature.
    pub va_hat: f64,
    pub v_el_hat: f64,
}

/// Pooled least-squares fit of `y = t·x + z` over all quadratures and polarisations.
///
/// Inputs are SNU. Bounds are left equal to the point estimates; see [`worst_case`].
pub fn estimate(
    x: &DualPol<Vec<Complex64>>,
    y: &DualPol<Vec<Complex64>>,
    cal: &NoiseCalibration,
) -> Result<EstimatedParams, CalibrationError> {
    let xs = quadratures(x);
    let ys = quadratures(y);
    if xs.len() != ys.len() {
        return Err(CalibrationError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 * MIN_ESTIMATION_SYMBOLS {
        return Err(CalibrationError::TooFewSamples { got: xs.len() / 2, needed: MIN_ESTIMATION_SYMBOLS });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    let sxx: f64 = xs.iter().map(|a| a * a).sum();
    let t_hat = sxy / sxx;
    let resid: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| b - t_hat * a).collect();
    let sigma2 = variance(&resid);
    if !(t_hat > 5.0 * (sigma2 / sxx).sqrt()) {
        return Err(CalibrationError::EstimationFailure { t_hat });
    }
    let n = xs.len();
    let xi = sigma2 - 1.0 - cal.v_el_hat;
    Ok(EstimatedParams {
        t_hat,
        xi_b_hat: xi,
        n_est: n,
        t_min: t_hat,
        xi_b_max: xi,
        eps_pe: 0.0,
        residual_var: sigma2,
        va_hat: sxx / n as f64,
        v_el_hat: cal.v_el_hat,
    })
}

/// Two-sided standard-normal quantile factor: `P(|Z| > z) = eps`.
pub fn quantile_z(eps: f64) -> f64 {
    let n = Normal::standard();
    -n.inverse_cdf(eps / 2.0)
}

/// Fill in the confidence bounds for parameter-estimation failure probability `eps_pe`.
pub fn worst_case(p: &EstimatedParams, eps_pe: f64, va: f64) -> EstimatedParams {
    let z = quantile_z(eps_pe);
    let n = p.n_est as f64;
    let t_min = (p.t_hat - z * (p.residual_var / (n * va)).sqrt()).max(0.0);
    let sigma2_max = p.residual_var * (1.0 + z * (2.0 / n).sqrt());
    EstimatedParams { t_min, xi_b_max: sigma2_max - 1.0 - p.v_el_hat, eps_pe, ..*p }
}

/// Refer excess noise at Bob back to the channel input: `ξ_A = ξ_B / t²`.
pub fn xi_conversions(xi_b: f64, t: f64) -> Result<f64, CalibrationError> {
    if t == 0.0 {
        return Err(CalibrationError::ZeroGain);
    }
    Ok(xi_b / (t * t))
}
