//! Probabilistically shaped square QAM constellations.
//!
//! Points live on the odd-integer grid `{±1, ±3, …}²`, are weighted with a
//! Maxwell-Boltzmann law `p ∝ exp(-ν |g|²)` and are finally rescaled by one
//! real factor so that the ensemble has a prescribed modulation variance.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum ConstellationError {
    #[error("constellation order {0} is not the square of an even integer")]
    NonSquareOrder(usize),
    #[error("shaping parameter must be non-negative, got {0}")]
    NegativeShaping(f64),
    #[error("target modulation variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("malformed constellation table: {0}")]
    Table(String),
}

/// Discrete ensemble of coherent states `{(α_k, p_k)}` in SNU amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Complex64>,
    probs: Vec<f64>,
    nu: f64,
    order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `Σ p |α|²`
    pub mean_photon: f64,
    /// `2⟨n⟩`
    pub va: f64,
    /// `Σ p α²`
    pub second_moment_a2: Complex64,
}

/// Maxwell-Boltzmann shaped square QAM scaled to modulation variance `target_va`.
pub fn build_ps_qam(order: usize, nu: f64, target_va: f64) -> Result<Constellation, ConstellationError> {
    let side = (order as f64).sqrt().round() as usize;
    if side * side != order || side == 0 || !side.is_multiple_of(2) {
        return Err(ConstellationError::NonSquareOrder(order));
    }
    if nu.is_nan() || nu < 0.0 {
        return Err(ConstellationError::NegativeShaping(nu));
    }
    if target_va.is_nan() || target_va <= 0.0 {
        return Err(ConstellationError::NonPositiveVariance(target_va));
    }

    let levels: Vec<f64> = (0..side).map(|i| (2 * i) as f64 - (side - 1) as f64).collect();
    let grid: Vec<Complex64> =
        levels.iter().flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im))).collect();

    // Shift the exponent by the smallest energy so strong shaping cannot underflow.
    let e_min = grid.iter().map(|g| g.norm_sqr()).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = grid.iter().map(|g| (-nu * (g.norm_sqr() - e_min)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let grid_energy: f64 = grid.iter().zip(&probs).map(|(g, p)| p * g.norm_sqr()).sum();
    let scale = (target_va / (2.0 * grid_energy)).sqrt();
    let points = grid.into_iter().map(|g| g * scale).collect();

    Ok(Constellation { points, probs, nu, order })
}

impl Constellation {
    /// Arbitrary ensemble. Probabilities are renormalised to sum to one.
    pub fn from_parts(points: Vec<Complex64>, probs: Vec<f64>, nu: f64) -> Result<Self, ConstellationError> {
        if points.len() != probs.len() || points.is_empty() {
            return Err(ConstellationError::Table("points and probabilities differ in length".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(ConstellationError::Table("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(ConstellationError::Table("probabilities sum to zero".into()));
        }
        let order = points.len();
        Ok(Self { points, probs: probs.into_iter().map(|p| p / total).collect(), nu, order })
    }

    /// One coherent state with probability one.
    pub fn single_point(alpha: Complex64) -> Self {
        Self { points: vec![alpha], probs: vec![1.0], nu: 0.0, order: 1 }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn moments(&self) -> Moments {
        let mut mean_photon = 0.0;
        let mut a2 = Complex64::new(0.0, 0.0);
        for (a, p) in self.points.iter().zip(&self.probs) {
            mean_photon += p * a.norm_sqr();
            a2 += a * a * *p;
        }
        Moments { mean_photon, va: 2.0 * mean_photon, second_moment_a2: a2 }
    }

    /// I.i.d. draws of coherent amplitudes `α`.
    pub fn sample_symbols(&self, count: usize, seed: u64) -> Vec<Complex64> {
        self.sample_stream(count, seed, 0)
    }

    /// Like [`sample_symbols`](Self::sample_symbols) but from an indexed
    /// substream, so chunks of a long sequence can be drawn independently.
    pub fn sample_stream(&self, count: usize, seed: u64, index: u64) -> Vec<Complex64> {
        if self.points.len() == 1 {
            return vec![self.points[0]; count];
        }
        let mut rng = stream_rng(seed, Stream::Symbols, index);
        let dist = WeightedIndex::new(&self.probs).expect("validated probabilities");
        (0..count).map(|_| self.points[dist.sample(&mut rng)]).collect()
    }

    /// Audit table with one `index, re, im, p` row per point.
    pub fn to_table(&self) -> String {
        let mut out = String::from("index,re,im,p\n");
        for (i, (a, p)) in self.points.iter().zip(&self.probs).enumerate() {
            let _ = writeln!(out, "{i},{:e},{:e},{:e}", a.re, a.im, p);
        }
        out
    }

    pub fn from_table(text: &str, nu: f64) -> Result<Self, ConstellationError> {
        let mut points = Vec::new();
        let mut probs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("index") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(ConstellationError::Table(format!("line {}: expected 4 columns", lineno + 1)));
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|e| ConstellationError::Table(format!("line {}: {e}", lineno + 1)));
            points.push(Complex64::new(num(cols[1])?, num(cols[2])?));
            probs.push(num(cols[3])?);
        }
        Self::from_parts(points, probs, nu)
    }
}

/// Quadrature means `(2 Re α, 2 Im α)` packed as a complex number.
pub fn quadrature_means(alphas: &[Complex64]) -> Vec<Complex64> {
    alphas.iter().map(|a| a * 2.0).collect()
}
