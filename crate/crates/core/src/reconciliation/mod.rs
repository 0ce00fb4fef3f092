//! Reverse reconciliation: multidimensional mapping, LDPC decoding with
//! puncturing, and frame-error Monte Carlo.

pub mod bp;
pub mod ldpc;
pub mod mdr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::rng::{stream_rng, Stream};
pub use bp::{bp_decode, DecodeResult, Decoder};
pub use ldpc::{construct_ira, LdpcCode};
pub use mdr::{md_llr, md_map};

/// Block dimension of the multidimensional mapping.
pub const MD_DIM: usize = 8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum ReconciliationError {
    #[error("multidimensional mapping needs d in {{1, 2, 4, 8}}, got {0}")]
    UnsupportedDimension(usize),
    #[error("zero-norm block cannot be mapped")]
    ZeroNormBlock,
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("code has no staircase parity part and cannot be encoded")]
    NotEncodable,
    #[error("target rate {target} is below the mother code rate {mother}")]
    RateBelowMother { target: f64, mother: f64 },
    #[error("need at least one frame")]
    NoFrames,
}

/// Fraction of the per-quadrature Gaussian capacity `½·log2(1+snr)` achieved.
///
/// Returns infinity for a positive rate at `snr ≤ 0`, where no capacity exists.
pub fn efficiency(effective_rate: f64, snr_quad: f64) -> f64 {
    let cap = 0.5 * snr_quad.ln_1p() / std::f64::consts::LN_2;
    if cap <= 0.0 {
        return if effective_rate > 0.0 { f64::INFINITY } else { 0.0 };
    }
    effective_rate / cap
}

/// Rate needed to reach efficiency `beta` at `snr_quad`.
pub fn required_rate(beta: f64, snr_quad: f64) -> f64 {
    beta * 0.5 * snr_quad.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciliationResult {
    pub snr: f64,
    pub fer: f64,
    pub beta: f64,
    pub frames: usize,
    /// Information-bit error rate before any final integrity check.
    pub residual_ber_pre_crc: f64,
    pub effective_rate: f64,
    pub mean_iterations: f64,
}

struct FrameOutcome {
    failed: bool,
    bit_errors: usize,
    iterations: usize,
}

fn run_frame(code: &LdpcCode, dec: &Decoder, snr: f64, seed: u64, frame: usize, max_iter: usize) -> FrameOutcome {
    let mut rng = stream_rng(seed, Stream::Reconciliation, frame as u64);
    let k = code.k();
    let word = if code.is_encodable() {
        let info: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
        code.encode(&info).expect("staircase code is encodable")
    } else {
        vec![0u8; code.n()]
    };
    let mut is_punct = vec![false; code.n()];
    for &p in code.punctured() {
        is_punct[p] = true;
    }
    let sent: Vec<usize> = (0..code.n()).filter(|&i| !is_punct[i]).collect();
    let blocks = sent.len().div_ceil(MD_DIM);
    let noise_var = 1.0 / snr;
    let sigma = noise_var.sqrt();
    let mut llr = vec![0.0; code.n()];
    let mut yb = [0.0; MD_DIM];
    let mut xb = [0.0; MD_DIM];
    let mut bb = [0u8; MD_DIM];
    for b in 0..blocks {
        for j in 0..MD_DIM {
            let y: f64 = rng.sample(StandardNormal);
            let z: f64 = rng.sample(StandardNormal);
            yb[j] = y;
            xb[j] = if sigma.is_finite() && sigma > 0.0 { y + sigma * z } else { y };
            // Padding beyond the last sent bit is a known zero.
            bb[j] = sent.get(b * MD_DIM + j).map_or(0, |&i| word[i]);
        }
        let w = md_map(&yb, &bb).expect("Gaussian block has nonzero norm");
        let l = md_llr(&xb, &w, noise_var);
        for j in 0..MD_DIM {
            if let Some(&i) = sent.get(b * MD_DIM + j) {
                llr[i] = l[j];
            }
        }
    }
    let r = dec.decode(&llr, max_iter);
    let bit_errors = r.bits[..k].iter().zip(&word[..k]).filter(|(a, b)| a != b).count();
    FrameOutcome { failed: !r.converged || r.bits != word, bit_errors, iterations: r.iterations }
}

/// Monte Carlo FER of the code on the multidimensional virtual channel at `snr_quad`.
///
/// The same seed draws the same Gaussian data and noise shapes at every SNR,
/// so sweeps compare codes on common random numbers.
pub fn simulate_fer(
    exec: Execution,
    code: &LdpcCode,
    snr_quad: f64,
    frames: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ReconciliationResult, ReconciliationError> {
    if frames == 0 {
        return Err(ReconciliationError::NoFrames);
    }
    let dec = Decoder::new(code);
    let out = par::map_indexed(exec, frames, |f| run_frame(code, &dec, snr_quad, seed, f, max_iter));
    let failures = out.iter().filter(|o| o.failed).count();
    let errors: usize = out.iter().map(|o| o.bit_errors).sum();
    let iters: usize = out.iter().map(|o| o.iterations).sum();
    Ok(ReconciliationResult {
        snr: snr_quad,
        fer: failures as f64 / frames as f64,
        beta: efficiency(code.effective_rate(), snr_quad),
        frames,
        residual_ber_pre_crc: errors as f64 / (frames * code.k()) as f64,
        effective_rate: code.effective_rate(),
        mean_iterations: iters as f64 / frames as f64,
    })
}
