//! Flooding sum-product decoder.

use super::ldpc::LdpcCode;

/// Messages are clipped here to keep the boxplus well conditioned.
const LLR_CLIP: f64 = 30.0;
const TANH_CLIP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Exact `a ⊞ b = 2·atanh(tanh(a/2)·tanh(b/2))` in a form that cannot overflow.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = a.signum() * b.signum() * a.abs().min(b.abs());
    s + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// Edge layout flattened once per code. Edges are numbered check by check.
pub struct Decoder<'a> {
    code: &'a LdpcCode,
    check_start: Vec<usize>,
    edge_var: Vec<u32>,
    var_start: Vec<usize>,
    var_edges: Vec<usize>,
}

impl<'a> Decoder<'a> {
    pub fn new(code: &'a LdpcCode) -> Self {
        let mut check_start = Vec::with_capacity(code.m() + 1);
        let mut edge_var = Vec::with_capacity(code.edges());
        check_start.push(0);
        for row in code.checks() {
            edge_var.extend_from_slice(row);
            check_start.push(edge_var.len());
        }
        let mut per_var: Vec<Vec<usize>> = vec![Vec::new(); code.n()];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v as usize].push(e);
        }
        let mut var_start = Vec::with_capacity(code.n() + 1);
        let mut var_edges = Vec::with_capacity(edge_var.len());
        var_start.push(0);
        for list in per_var {
            var_edges.extend(list);
            var_start.push(var_edges.len());
        }
        Self { code, check_start, edge_var, var_start, var_edges }
    }

    /// Decode channel LLRs (positive favours bit 0). Punctured positions should carry 0.
    pub fn decode(&self, llr: &[f64], max_iter: usize) -> DecodeResult {
        let n = self.code.n();
        assert_eq!(llr.len(), n, "LLR vector length must equal the code length");
        let ch: Vec<f64> = llr.iter().map(|v| v.clamp(-LLR_CLIP, LLR_CLIP)).collect();
        let mut c2v = vec![0.0; self.edge_var.len()];
        let mut total = ch.clone();
        let mut bits = vec![0u8; n];
        let mut fwd = Vec::new();
        let mut inc = Vec::new();
        for it in 1..=max_iter {
            for c in 0..self.code.m() {
                let (lo, hi) = (self.check_start[c], self.check_start[c + 1]);
                inc.clear();
                inc.extend(
                    (lo..hi)
                        .map(|e| (0.5 * (total[self.edge_var[e] as usize] - c2v[e]).clamp(-LLR_CLIP, LLR_CLIP)).tanh()),
                );
                let d = inc.len();
                // Leave-one-out tanh products via prefix and suffix products.
                fwd.clear();
                let mut acc = 1.0;
                for &t in &inc {
                    fwd.push(acc);
                    acc *= t;
                }
                let mut back = 1.0;
                for j in (0..d).rev() {
                    let p = (fwd[j] * back).clamp(-TANH_CLIP, TANH_CLIP);
                    c2v[lo + j] = 2.0 * p.atanh();
                    back *= inc[j];
                }
            }
            for v in 0..n {
                let s: f64 = self.var_edges[self.var_start[v]..self.var_start[v + 1]].iter().map(|&e| c2v[e]).sum();
                total[v] = ch[v] + s;
                bits[v] = (total[v] < 0.0) as u8;
            }
            if self.code.syndrome_ok(&bits) {
                return DecodeResult { bits, converged: true, iterations: it };
            }
        }
        DecodeResult { bits, converged: false, iterations: max_iter }
    }
}

pub fn bp_decode(llr: &[f64], code: &LdpcCode, max_iter: usize) -> DecodeResult {
    Decoder::new(code).decode(llr, max_iter)
}
