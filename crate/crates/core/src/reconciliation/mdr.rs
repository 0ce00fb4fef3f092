//! Multidimensional reconciliation over the normed division algebras.
//!
//! Blocks of `d ∈ {1, 2, 4, 8}` Gaussian values are rotated onto the BPSK
//! image `±1/√d` of `d` code bits. The rotation is left multiplication by a
//! unit element `w` of the reals, complex numbers, quaternions or octonions,
//! built with the Cayley-Dickson doubling. Only `w` needs to be disclosed.

use super::ReconciliationError;

/// Cayley-Dickson conjugate: negate every imaginary component.
pub fn conj(a: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = a.iter().map(|v| -v).collect();
    c[0] = a[0];
    c
}

/// Product in the `a.len()`-dimensional Cayley-Dickson algebra.
///
/// Uses `(a, b)(c, d) = (ac − d̄b, da + bc̄)` on halves.
pub fn mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let h = n / 2;
    let (a, b) = x.split_at(h);
    let (c, d) = y.split_at(h);
    let ac = mul(a, c);
    let db = mul(&conj(d), b);
    let da = mul(d, a);
    let bc = mul(b, &conj(c));
    let mut out = Vec::with_capacity(n);
    out.extend(ac.iter().zip(&db).map(|(p, q)| p - q));
    out.extend(da.iter().zip(&bc).map(|(p, q)| p + q));
    out
}

fn check_dim(d: usize) -> Result<(), ReconciliationError> {
    if matches!(d, 1 | 2 | 4 | 8) {
        Ok(())
    } else {
        Err(ReconciliationError::UnsupportedDimension(d))
    }
}

/// BPSK image of code bits: `0 → +1/√d`, `1 → −1/√d`.
pub fn bpsk(bits: &[u8]) -> Vec<f64> {
    let a = 1.0 / (bits.len() as f64).sqrt();
    bits.iter().map(|&b| if b == 0 { a } else { -a }).collect()
}

/// Rotation coefficients `w = s·ū` with `u = y/‖y‖`, so that `w·u = s`.
pub fn md_map(y: &[f64], bits: &[u8]) -> Result<Vec<f64>, ReconciliationError> {
    check_dim(y.len())?;
    if bits.len() != y.len() {
        return Err(ReconciliationError::LengthMismatch { expected: y.len(), got: bits.len() });
    }
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(ReconciliationError::ZeroNormBlock);
    }
    let u: Vec<f64> = y.iter().map(|v| v / norm).collect();
    Ok(mul(&bpsk(bits), &conj(&u)))
}

/// Apply the rotation `M = L_w` to a vector.
pub fn rotate(coeffs: &[f64], v: &[f64]) -> Vec<f64> {
    mul(coeffs, v)
}

/// Matrix of `L_w`, row-major, for inspection.
pub fn rotation_matrix(coeffs: &[f64]) -> Vec<Vec<f64>> {
    let d = coeffs.len();
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            mul(coeffs, &e)
        })
        .collect();
    (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

/// LLRs of the virtual BPSK channel seen by the other party.
///
/// `x` is the correlated block, `noise_var` the variance of `x − y` per
/// dimension. The rotated block behaves like `‖y‖·s + n`; `‖y‖` is
/// approximated by `‖x‖`.
pub fn md_llr(x: &[f64], coeffs: &[f64], noise_var: f64) -> Vec<f64> {
    let o = rotate(coeffs, x);
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 2.0 * norm / ((x.len() as f64).sqrt() * noise_var);
    o.iter().map(|v| v * scale).collect()
}
