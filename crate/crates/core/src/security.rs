//! Secret key rate under collective Gaussian attacks with trusted detector noise.
//!
//! `I_AB` and `χ_BE` are per symbol and per polarisation. The polarisation
//! factor of 2 only enters [`skr`].

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::transmittance;
use crate::constellation::Constellation;
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("invalid security parameter: {0}")]
    InvalidParams(String),
    #[error("Fock cutoff {cutoff} too small: trace deficit {deficit:.2e}")]
    CutoffInsufficient { cutoff: usize, deficit: f64 },
    #[error("covariance matrix is not physical: symplectic eigenvalue {0}")]
    PhysicalityViolation(f64),
    #[error("negative discriminant {0:.3e} in the closed-form bound")]
    NumericalDomain(f64),
    #[error("zero transmittance")]
    ZeroTransmittance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecurityParams {
    pub va: f64,
    /// Channel transmittance T.
    pub t: f64,
    pub eta: f64,
    pub v_el: f64,
    pub xi_a: f64,
    pub beta: f64,
    pub fer: f64,
    pub symbol_rate: f64,
    pub n_over_n: f64,
    /// Total block length N; `None` is the asymptotic limit.
    pub total_block: Option<f64>,
    pub eps_smooth: f64,
    pub eps_pe: f64,
    /// Fock cutoff for Z*; `None` picks `⌈10⟨n⟩ + 20⌉`.
    pub fock_cutoff: Option<usize>,
}

impl Default for SecurityParams {
    fn default() -> Self {
        let t = transmittance(25.2, 0.2);
        Self {
            va: 5.3,
            t,
            eta: 0.7,
            v_el: 0.34,
            xi_a: 0.005 / (0.7 * t / 2.0),
            beta: 0.96,
            fer: 0.5,
            symbol_rate: 250e6,
            n_over_n: 0.25,
            total_block: Some(2e7),
            eps_smooth: 1e-10,
            eps_pe: 1e-10,
            fock_cutoff: None,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<(), SecurityError> {
        let bad = |m: &str| Err(SecurityError::InvalidParams(m.into()));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.fer) {
            return bad("FER must lie in [0, 1]");
        }
        if !(self.n_over_n > 0.0 && self.n_over_n <= 1.0) {
            return bad("n/N must lie in (0, 1]");
        }
        if !(self.va >= 0.0 && self.v_el >= 0.0 && self.xi_a >= 0.0) {
            return bad("variances and noise must be non-negative");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.t >= 0.0 && self.t <= 1.0) {
            return bad("transmittance must lie in [0, 1]");
        }
        if let Some(n) = self.total_block {
            if !(n * self.n_over_n >= 1.0) {
                return bad("block length must be positive");
            }
        }
        Ok(())
    }

    /// Key-generation symbols `n = N·(n/N)`, or `None` asymptotically.
    pub fn block_n(&self) -> Option<f64> {
        self.total_block.map(|n| n * self.n_over_n)
    }
}

/// Binary entropy-like function of a symplectic eigenvalue, `g(1) = 0`.
pub fn g(x: f64) -> f64 {
    if x <= 1.0 {
        return 0.0;
    }
    let a = (x + 1.0) / 2.0;
    let b = (x - 1.0) / 2.0;
    a * a.log2() - b * b.log2()
}

/// Default Fock cutoff for a mean photon number.
pub fn default_cutoff(mean_photon: f64) -> usize {
    (10.0 * mean_photon + 20.0).ceil() as usize
}

/// `Z* = 2·Tr(√τ a √τ a†)` for the average state `τ` of the ensemble.
pub fn z_star(c: &Constellation, fock_cutoff: usize) -> Result<f64, SecurityError> {
    let dim = fock_cutoff + 1;
    let mut tau = DMatrix::<Complex64>::zeros(dim, dim);
    let mut amp = vec![Complex64::new(0.0, 0.0); dim];
    for (alpha, &p) in c.points().iter().zip(c.probs()) {
        if p == 0.0 {
            continue;
        }
        amp[0] = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for m in 1..dim {
            amp[m] = amp[m - 1] * alpha / (m as f64).sqrt();
        }
        for j in 0..dim {
            let aj = amp[j].conj() * p;
            for i in 0..dim {
                tau[(i, j)] += amp[i] * aj;
            }
        }
    }
    let trace: f64 = (0..dim).map(|i| tau[(i, i)].re).sum();
    let deficit = 1.0 - trace;
    if deficit > 1e-8 {
        return Err(SecurityError::CutoffInsufficient { cutoff: fock_cutoff, deficit });
    }
    let eig = SymmetricEigen::new(tau);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    let s = u * DMatrix::from_diagonal(&roots.map(|r| Complex64::new(r, 0.0))) * u.adjoint();
    // Tr(S a S a†) with a[j][j+1] = √(j+1).
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..dim - 1 {
        for j in 0..dim - 1 {
            acc += s[(i, j)] * s[(j + 1, i + 1)] * ((i + 1) as f64 * (j + 1) as f64).sqrt();
        }
    }
    Ok(2.0 * acc.re)
}

/// Correlation of the Gaussian-modulated ensemble with the same variance.
pub fn gaussian_z_star(va: f64) -> f64 {
    let v = va + 1.0;
    (v * v - 1.0).sqrt()
}

struct Noise {
    v: f64,
    chi_line: f64,
    chi_het: f64,
    chi_tot: f64,
}

fn noise(p: &SecurityParams) -> Result<Noise, SecurityError> {
    if p.t <= 0.0 {
        return Err(SecurityError::ZeroTransmittance);
    }
    let chi_line = (1.0 - p.t) / p.t + p.xi_a;
    let chi_het = (2.0 - p.eta + 2.0 * p.v_el) / p.eta;
    Ok(Noise { v: p.va + 1.0, chi_line, chi_het, chi_tot: chi_line + chi_het / p.t })
}

pub fn mutual_information(p: &SecurityParams) -> Result<f64, SecurityError> {
    let n = noise(p)?;
    Ok(((n.v + n.chi_tot) / (1.0 + n.chi_tot)).log2())
}

/// Symplectic eigenvalues of a `2m × 2m` covariance matrix in `(x₁, p₁, x₂, p₂, …)` order.
pub fn symplectic_eigenvalues(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows();
    let mut omega = DMatrix::<f64>::zeros(n, n);
    for k in 0..n / 2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let e = SymmetricEigen::new(gamma.clone());
    let sqrt = &e.eigenvectors
        * DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * e.eigenvectors.transpose();
    let m = &sqrt * omega * &sqrt;
    let mut nu2: Vec<f64> = SymmetricEigen::new(m.transpose() * &m).eigenvalues.iter().copied().collect();
    nu2.sort_by(f64::total_cmp);
    nu2.iter().skip(1).step_by(2).map(|v| v.max(0.0).sqrt()).collect()
}

fn entropy(gamma: &DMatrix<f64>) -> Result<f64, SecurityError> {
    let mut s = 0.0;
    for nu in symplectic_eigenvalues(gamma) {
        if nu < 1.0 - 1e-9 {
            return Err(SecurityError::PhysicalityViolation(nu));
        }
        s += g(nu);
    }
    Ok(s)
}

fn block(m: &mut DMatrix<f64>, r: usize, c: usize, b: &SMatrix<f64, 2, 2>) {
    for i in 0..2 {
        for j in 0..2 {
            m[(2 * r + i, 2 * c + j)] = b[(i, j)];
        }
    }
}

/// `χ_BE = S(AB) − S(A F G | heterodyne on B)` with the detector purified.
///
/// Mode order is Alice, Bob, then the EPR pair `F, G` modelling electronic
/// noise; `G` is mixed into Bob's mode on a beamsplitter of transmittance η.
pub fn holevo_generic(p: &SecurityParams, z_star: f64) -> Result<f64, SecurityError> {
    let n = noise(p)?;
    let eye = SMatrix::<f64, 2, 2>::identity();
    let sz = SMatrix::<f64, 2, 2>::new(1.0, 0.0, 0.0, -1.0);
    let a = n.v;
    let b = p.t * (n.v - 1.0 + p.xi_a) + 1.0;
    let c = p.t.sqrt() * z_star;

    let mut ab = DMatrix::<f64>::zeros(4, 4);
    block(&mut ab, 0, 0, &(eye * a));
    block(&mut ab, 1, 1, &(eye * b));
    block(&mut ab, 0, 1, &(sz * c));
    block(&mut ab, 1, 0, &(sz * c));
    let s_ab = entropy(&ab)?;

    let eta = p.eta.min(1.0 - 1e-9);
    let vd = 1.0 + 2.0 * p.v_el / (1.0 - eta);
    let epr = (vd * vd - 1.0).sqrt();
    let mut full = DMatrix::<f64>::zeros(8, 8);
    full.view_mut((0, 0), (4, 4)).copy_from(&ab);
    block(&mut full, 2, 2, &(eye * vd));
    block(&mut full, 3, 3, &(eye * vd));
    block(&mut full, 2, 3, &(sz * epr));
    block(&mut full, 3, 2, &(sz * epr));

    // Beamsplitter on (B, G): B' = √η B + √(1−η) G, G' = −√(1−η) B + √η G.
    let (se, sr) = (eta.sqrt(), (1.0 - eta).sqrt());
    let mut bs = DMatrix::<f64>::identity(8, 8);
    block(&mut bs, 1, 1, &(eye * se));
    block(&mut bs, 1, 3, &(eye * sr));
    block(&mut bs, 3, 1, &(eye * -sr));
    block(&mut bs, 3, 3, &(eye * se));
    let mixed = &bs * full * bs.transpose();

    let rest = [0usize, 1, 4, 5, 6, 7];
    let meas = [2usize, 3];
    let pick =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| mixed[(rows[i], cols[j])]);
    let g_rest = pick(&rest, &rest);
    let g_corr = pick(&rest, &meas);
    let g_meas = pick(&meas, &meas) + DMatrix::<f64>::identity(2, 2);
    let inv = g_meas.try_inverse().ok_or(SecurityError::PhysicalityViolation(f64::NAN))?;
    let cond = &g_rest - &g_corr * inv * g_corr.transpose();
    let cond = (&cond + cond.transpose()) * 0.5;
    Ok(s_ab - entropy(&cond)?)
}

/// Closed-form Gaussian-modulation bound, used as an oracle for [`holevo_generic`].
pub fn holevo_closed_form(p: &SecurityParams) -> Result<f64, SecurityError> {
    let Noise { v, chi_line, chi_het, chi_tot } = noise(p)?;
    let t = p.t;
    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * b.sqrt() + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / (t * (v + chi_tot)).powi(2);
    let d = ((v + b.sqrt() * chi_het) / (t * (v + chi_tot))).powi(2);
    let pair = |s: f64, q: f64| -> Result<(f64, f64), SecurityError> {
        let disc = s * s - 4.0 * q;
        if disc < -1e-12 {
            return Err(SecurityError::NumericalDomain(disc));
        }
        let r = disc.max(0.0).sqrt();
        Ok(((0.5 * (s + r)).sqrt(), (0.5 * (s - r)).max(0.0).sqrt()))
    };
    let (n1, n2) = pair(a, b)?;
    let (n3, n4) = pair(c, d)?;
    Ok(g(n1) + g(n2) - g(n3) - g(n4))
}

/// Privacy-amplification penalty `7·√(log2(2/ε)/n)`.
pub fn finite_size_delta(block_n: f64, eps_smooth: f64) -> f64 {
    7.0 * ((2.0 / eps_smooth).log2() / block_n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkrReport {
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta: f64,
    /// Reported rate in bit/s, floored at zero.
    pub skr: f64,
    /// Unfloored `2·R_S·(n/N)·(1−FER)·(β·I_AB − χ_BE − Δ)`.
    pub raw_skr: f64,
    pub below_threshold: bool,
    pub z_star: f64,
    /// Serialized inline so the report is one flat record.
    #[serde(flatten)]
    pub inputs: SecurityParams,
}

/// Key rate for a known correlation `z_star`.
pub fn skr_with_z(p: &SecurityParams, z_star: f64) -> Result<SkrReport, SecurityError> {
    p.validate()?;
    let i_ab = mutual_information(p)?;
    let chi_be = holevo_generic(p, z_star)?;
    let delta = p.block_n().map_or(0.0, |n| finite_size_delta(n, p.eps_smooth));
    let raw = 2.0 * p.symbol_rate * p.n_over_n * (1.0 - p.fer) * (p.beta * i_ab - chi_be - delta);
    Ok(SkrReport {
        i_ab,
        chi_be,
        delta,
        skr: raw.max(0.0),
        raw_skr: raw,
        below_threshold: raw <= 0.0,
        z_star,
        inputs: p.clone(),
    })
}

pub fn constellation_z_star(p: &SecurityParams, c: &Constellation) -> Result<f64, SecurityError> {
    let cutoff = p.fock_cutoff.unwrap_or_else(|| default_cutoff(c.moments().mean_photon));
    z_star(c, cutoff)
}

pub fn skr(p: &SecurityParams, c: &Constellation) -> Result<SkrReport, SecurityError> {
    skr_with_z(p, constellation_z_star(p, c)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub distance_km: f64,
    #[serde(rename = "T")]
    pub t: f64,
    /// Total block length, `None` for the asymptotic curve.
    #[serde(rename = "N")]
    pub n: Option<f64>,
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta: f64,
    pub skr_bps: f64,
    pub z_star: f64,
}

/// Key rate over a distance × block-length grid at fixed excess noise `ξ_A`.
pub fn sweep_distance(
    exec: Execution,
    p: &SecurityParams,
    c: &Constellation,
    atten_db_per_km: f64,
    distances: &[f64],
    blocks: &[Option<f64>],
) -> Result<Vec<SweepRow>, SecurityError> {
    if distances.is_empty() || blocks.is_empty() {
        return Err(SecurityError::InvalidParams("empty sweep grid".into()));
    }
    let z = constellation_z_star(p, c)?;
    let grid: Vec<(f64, Option<f64>)> = distances.iter().flat_map(|&d| blocks.iter().map(move |&n| (d, n))).collect();
    par::map_indexed(exec, grid.len(), |i| {
        let (d, n) = grid[i];
        let q = SecurityParams { t: transmittance(d, atten_db_per_km), total_block: n, ..p.clone() };
        let r = skr_with_z(&q, z)?;
        Ok(SweepRow {
            distance_km: d,
            t: q.t,
            n,
            i_ab: r.i_ab,
            chi_be: r.chi_be,
            delta: r.delta,
            skr_bps: r.skr,
            z_star: z,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::build_ps_qam;

    fn gaussian(p: &SecurityParams) -> f64 {
        holevo_generic(p, gaussian_z_star(p.va)).unwrap()
    }

    #[test]
    fn g_values() {
        assert_eq!(g(1.0), 0.0);
        assert!((g(3.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_cases() {
        let ideal = SecurityParams { t: 1.0, eta: 1.0, v_el: 0.0, xi_a: 0.0, ..Default::default() };
        assert!((mutual_information(&ideal).unwrap() - (7.3f64 / 2.0).log2()).abs() < 1e-12);
        assert!((mutual_information(&SecurityParams::default()).unwrap() - 0.518).abs() < 0.005);
        assert_eq!(mutual_information(&SecurityParams { va: 0.0, ..Default::default() }).unwrap(), 0.0);
        assert_eq!(
            mutual_information(&SecurityParams { t: 0.0, ..Default::default() }),
            Err(SecurityError::ZeroTransmittance)
        );
    }

    #[test]
    fn generic_matches_closed_form_on_grid() {
        for t in [0.1, 0.5, 1.0] {
            for xi in [0.0, 0.05, 0.1] {
                for va in [1.0, 5.3, 10.0] {
                    let p = SecurityParams { t, xi_a: xi, va, ..Default::default() };
                    let d = (gaussian(&p) - holevo_closed_form(&p).unwrap()).abs();
                    assert!(d < 1e-9, "T={t} xi={xi} va={va}: {d}");
                }
            }
        }
        let ideal = SecurityParams { t: 1.0, eta: 1.0, v_el: 0.0, xi_a: 0.0, ..Default::default() };
        assert!((gaussian(&ideal) - holevo_closed_form(&ideal).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn holevo_limits_and_monotonicity() {
        let tiny = SecurityParams { t: 1e-9, ..Default::default() };
        assert!(gaussian(&tiny).abs() < 1e-6);
        let novar = SecurityParams { va: 0.0, xi_a: 0.0, ..Default::default() };
        assert!(gaussian(&novar).abs() < 1e-6);
        let mut last = -1.0;
        for k in 0..10 {
            let p = SecurityParams { xi_a: 0.01 * k as f64, ..Default::default() };
            let chi = gaussian(&p);
            assert!(chi > last);
            last = chi;
        }
    }

    #[test]
    fn operating_point_values() {
        let p = SecurityParams::default();
        assert!((holevo_closed_form(&p).unwrap() - 0.436038).abs() < 1e-5);
        let delta = finite_size_delta(5e6, 1e-10);
        assert!((delta - 0.0183125).abs() < 1e-6);
        assert!((finite_size_delta(5e5, 1e-10) / delta - 10f64.sqrt()).abs() < 1e-12);
        assert!(finite_size_delta(1e30, 1e-10) < 1e-10);
    }

    #[test]
    fn z_star_cases() {
        let vac = Constellation::single_point(Complex64::new(0.0, 0.0));
        assert!(z_star(&vac, 20).unwrap().abs() < 1e-12);
        let c = build_ps_qam(64, 0.08, 5.3).unwrap();
        let a = z_star(&c, 60).unwrap();
        let b = z_star(&c, 80).unwrap();
        assert!((a - b).abs() < 1e-6);
        assert!((a - 6.21904).abs() < 1e-4);
        assert!(a <= gaussian_z_star(5.3) + 1e-9);
        let far = Constellation::single_point(Complex64::new(4.0, 0.0));
        assert!(matches!(z_star(&far, 10), Err(SecurityError::CutoffInsufficient { .. })));
    }

    #[test]
    fn report_is_consistent_and_thresholded() {
        let c = build_ps_qam(64, 0.08, 5.3).unwrap();
        let r = skr(&SecurityParams::default(), &c).unwrap();
        let p = &r.inputs;
        let expect = 2.0 * p.symbol_rate * p.n_over_n * (1.0 - p.fer) * (p.beta * r.i_ab - r.chi_be - r.delta);
        assert_eq!(r.skr, expect);
        assert!(r.skr > 0.95e6 && r.skr < 3.8e6);
        let bad = skr(&SecurityParams { xi_a: 1.0, ..Default::default() }, &c).unwrap();
        assert!(bad.below_threshold && bad.skr == 0.0 && bad.raw_skr < 0.0);
        let asym = skr(&SecurityParams { total_block: None, ..Default::default() }, &c).unwrap();
        assert!(asym.skr >= r.skr && asym.delta == 0.0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        for p in [
            SecurityParams { beta: 0.0, ..Default::default() },
            SecurityParams { fer: 1.5, ..Default::default() },
            SecurityParams { n_over_n: 0.0, ..Default::default() },
            SecurityParams { xi_a: -0.1, ..Default::default() },
        ] {
            assert!(matches!(p.validate(), Err(SecurityError::InvalidParams(_))));
        }
    }

    #[test]
    fn sweep_orders_curves() {
        let c = build_ps_qam(64, 0.08, 5.3).unwrap();
        let d: Vec<f64> = (0..=6).map(|k| 10.0 * k as f64).collect();
        let blocks = [Some(2e6), Some(2e7), None];
        let rows = sweep_distance(Execution::Serial, &SecurityParams::default(), &c, 0.2, &d, &blocks).unwrap();
        for g in rows.chunks(3) {
            assert!(g[0].skr_bps <= g[1].skr_bps && g[1].skr_bps <= g[2].skr_bps);
        }
        let par = sweep_distance(Execution::Parallel, &SecurityParams::default(), &c, 0.2, &d, &blocks).unwrap();
        assert_eq!(rows, par);
    }
}
