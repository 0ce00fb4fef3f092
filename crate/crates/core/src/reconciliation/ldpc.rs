//! Sparse parity-check codes: alist I/O, an IRA construction, staircase
//! encoding and seeded puncturing.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;

use super::ReconciliationError;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    /// Variable indices of each check.
    checks: Vec<Vec<u32>>,
    /// Check indices of each variable.
    vars: Vec<Vec<u32>>,
    punctured: Vec<usize>,
    /// Last `m` columns form a dual-diagonal staircase.
    staircase: bool,
}

impl LdpcCode {
    /// Build from the check → variable adjacency.
    pub fn from_checks(n: usize, checks: Vec<Vec<u32>>) -> Result<Self, ReconciliationError> {
        let m = checks.len();
        if m == 0 || m >= n {
            return Err(ReconciliationError::InvalidCode(format!("{m} checks for {n} bits")));
        }
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            let mut seen = HashSet::new();
            for &v in row {
                if v as usize >= n || !seen.insert(v) {
                    return Err(ReconciliationError::InvalidCode(format!("bad entry {v} in check {c}")));
                }
                vars[v as usize].push(c as u32);
            }
        }
        let mut code = Self { n, m, checks, vars, punctured: Vec::new(), staircase: false };
        code.staircase = code.detect_staircase();
        Ok(code)
    }

    fn detect_staircase(&self) -> bool {
        let k = self.n - self.m;
        (0..self.m).all(|j| {
            let mut col = self.vars[k + j].clone();
            col.sort_unstable();
            let j = j as u32;
            if j as usize + 1 < self.m {
                col == [j, j + 1]
            } else {
                col == [j]
            }
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Information bits `k = n − m`, assuming full rank.
    pub fn k(&self) -> usize {
        self.n - self.m
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn punctured(&self) -> &[usize] {
        &self.punctured
    }

    pub fn effective_rate(&self) -> f64 {
        self.k() as f64 / (self.n - self.punctured.len()) as f64
    }

    pub fn checks(&self) -> &[Vec<u32>] {
        &self.checks
    }

    pub fn vars(&self) -> &[Vec<u32>] {
        &self.vars
    }

    pub fn edges(&self) -> usize {
        self.checks.iter().map(Vec::len).sum()
    }

    pub fn is_encodable(&self) -> bool {
        self.staircase
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.checks.iter().all(|row| row.iter().fold(0u8, |a, &v| a ^ bits[v as usize]) == 0)
    }

    /// Systematic encoding: the first `k` bits are `info`, parities follow the staircase.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, ReconciliationError> {
        if !self.staircase {
            return Err(ReconciliationError::NotEncodable);
        }
        let k = self.k();
        if info.len() != k {
            return Err(ReconciliationError::LengthMismatch { expected: k, got: info.len() });
        }
        let mut word = info.to_vec();
        word.resize(self.n, 0);
        let mut prev = 0u8;
        for j in 0..self.m {
            let s = self.checks[j].iter().filter(|&&v| (v as usize) < k).fold(0u8, |a, &v| a ^ info[v as usize]);
            prev ^= s;
            word[k + j] = prev;
        }
        Ok(word)
    }

    /// Puncture `n − k/target_rate` seeded uniform positions.
    pub fn rate_adapt(&self, target_rate: f64, seed: u64) -> Result<Self, ReconciliationError> {
        let mother = self.rate();
        if !(target_rate >= mother - 1e-12) || target_rate >= 1.0 {
            return Err(ReconciliationError::RateBelowMother { target: target_rate, mother });
        }
        let keep = (self.k() as f64 / target_rate).round() as usize;
        let count = self.n - keep.min(self.n);
        let mut rng = stream_rng(seed, Stream::Puncturing, 0);
        let mut p = index::sample(&mut rng, self.n, count).into_vec();
        p.sort_unstable();
        Ok(Self { punctured: p, ..self.clone() })
    }

    /// MacKay alist text, one-based indices, rows padded with zeros.
    pub fn to_alist(&self) -> String {
        let mut s = String::new();
        let max_col = self.vars.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.checks.iter().map(Vec::len).max().unwrap_or(0);
        let line = |s: &mut String, v: &[u32], width: usize| {
            let mut cells: Vec<String> = v.iter().map(|x| (x + 1).to_string()).collect();
            cells.resize(width, "0".into());
            let _ = writeln!(s, "{}", cells.join(" "));
        };
        let _ = writeln!(s, "{} {}", self.n, self.m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let degs = |v: &[Vec<u32>]| v.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}", degs(&self.vars));
        let _ = writeln!(s, "{}", degs(&self.checks));
        for col in &self.vars {
            line(&mut s, col, max_col);
        }
        for row in &self.checks {
            line(&mut s, row, max_row);
        }
        s
    }

    pub fn from_alist(text: &str) -> Result<Self, ReconciliationError> {
        let bad = |m: &str| ReconciliationError::InvalidCode(format!("alist: {m}"));
        let mut tok = text.split_ascii_whitespace().map(|t| t.parse::<usize>().map_err(|_| bad("non-numeric token")));
        let mut next = || tok.next().unwrap_or_else(|| Err(bad("unexpected end of file")));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_deg: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_, _>>()?;
        let row_deg: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_, _>>()?;
        let mut cols = Vec::with_capacity(n);
        for &d in &col_deg {
            let entries: Vec<usize> = (0..max_col).map(|_| next()).collect::<Result<_, _>>()?;
            cols.push(entries.into_iter().filter(|&e| e > 0).collect::<Vec<_>>());
            if cols.last().unwrap().len() != d {
                return Err(bad("column degree mismatch"));
            }
        }
        let mut checks = Vec::with_capacity(m);
        for &d in &row_deg {
            let entries: Vec<usize> = (0..max_row).map(|_| next()).collect::<Result<_, _>>()?;
            let row: Vec<u32> = entries.into_iter().filter(|&e| e > 0).map(|e| (e - 1) as u32).collect();
            if row.len() != d {
                return Err(bad("row degree mismatch"));
            }
            checks.push(row);
        }
        let code = Self::from_checks(n, checks)?;
        for (v, col) in cols.iter().enumerate() {
            let mut a: Vec<u32> = col.iter().map(|&c| (c - 1) as u32).collect();
            let mut b = code.vars[v].clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(bad("column and row lists disagree"));
            }
        }
        Ok(code)
    }
}

/// Irregular repeat-accumulate construction with girth at least 6.
///
/// Information columns get `info_degree` edges each, placed on the
/// lowest-degree checks that do not close a 4-cycle (ties broken at random).
/// Parity columns form the dual-diagonal staircase, which makes the code
/// linear-time encodable.
pub fn construct_ira(n: usize, rate: f64, info_degree: usize, seed: u64) -> Result<LdpcCode, ReconciliationError> {
    let k = (n as f64 * rate).round() as usize;
    let m = n - k;
    if k == 0 || m < info_degree {
        return Err(ReconciliationError::InvalidCode(format!("cannot build n={n} rate={rate}")));
    }
    let mut rng = stream_rng(seed, Stream::CodeConstruction, 0);
    let mut checks: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut vars: Vec<Vec<u32>> = vec![Vec::new(); n];
    for j in 0..m {
        let v = k + j;
        checks[j].push(v as u32);
        vars[v].push(j as u32);
        if j + 1 < m {
            checks[j + 1].push(v as u32);
            vars[v].push(j as u32 + 1);
        }
    }
    // Checks bucketed by information degree, with each check's slot in its bucket.
    let mut buckets: Vec<Vec<usize>> = vec![(0..m).collect()];
    let mut slot: Vec<usize> = (0..m).collect();
    let mut degree = vec![0usize; m];
    let mut stamp = vec![usize::MAX; m];
    for v in 0..k {
        let mut chosen: Vec<usize> = Vec::with_capacity(info_degree);
        for _ in 0..info_degree {
            // Checks two hops from the current column are forbidden.
            for &c in &chosen {
                stamp[c] = v;
                for &u in &checks[c] {
                    for &c2 in &vars[u as usize] {
                        stamp[c2 as usize] = v;
                    }
                }
            }
            let mut pick = None;
            'levels: for bucket in &buckets {
                if bucket.is_empty() {
                    continue;
                }
                for _ in 0..32 {
                    let c = bucket[rng.random_range(0..bucket.len())];
                    if stamp[c] != v {
                        pick = Some(c);
                        break 'levels;
                    }
                }
                let free: Vec<usize> = bucket.iter().copied().filter(|&c| stamp[c] != v).collect();
                if !free.is_empty() {
                    pick = Some(free[rng.random_range(0..free.len())]);
                    break;
                }
            }
            let c =
                pick.ok_or_else(|| ReconciliationError::InvalidCode("ran out of checks avoiding 4-cycles".into()))?;
            let d = degree[c];
            let last = *buckets[d].last().unwrap();
            buckets[d].swap_remove(slot[c]);
            if last != c {
                slot[last] = slot[c];
            }
            if buckets.len() == d + 1 {
                buckets.push(Vec::new());
            }
            slot[c] = buckets[d + 1].len();
            buckets[d + 1].push(c);
            degree[c] += 1;
            chosen.push(c);
            checks[c].push(v as u32);
            vars[v].push(c as u32);
        }
    }
    for row in &mut checks {
        row.sort_unstable();
    }
    LdpcCode::from_checks(n, checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LdpcCode {
        construct_ira(1000, 0.2, 8, 1).unwrap()
    }

    #[test]
    fn construction_shape() {
        let c = small();
        assert_eq!((c.n(), c.m(), c.k()), (1000, 800, 200));
        assert!(c.is_encodable());
        assert!((c.rate() - 0.2).abs() < 1e-12);
        assert_eq!(c.edges(), 200 * 8 + 2 * 800 - 1);
    }

    #[test]
    fn girth_is_at_least_six() {
        let c = small();
        for row in c.checks() {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    let shared = c.vars()[a as usize].iter().filter(|x| c.vars()[b as usize].contains(x)).count();
                    assert_eq!(shared, 1);
                }
            }
        }
    }

    #[test]
    fn encoding_satisfies_checks() {
        let c = small();
        let mut rng = stream_rng(3, Stream::Reconciliation, 0);
        for _ in 0..10 {
            let info: Vec<u8> = (0..c.k()).map(|_| rng.random_range(0..2)).collect();
            let w = c.encode(&info).unwrap();
            assert!(c.syndrome_ok(&w));
            assert_eq!(&w[..c.k()], &info[..]);
        }
    }

    #[test]
    fn alist_round_trip_is_exact() {
        let c = small();
        let text = c.to_alist();
        let back = LdpcCode::from_alist(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_alist(), text);
        assert!(LdpcCode::from_alist("3 2\n1 1\n").is_err());
    }

    #[test]
    fn puncturing_arithmetic() {
        let c = small();
        assert!(c.rate_adapt(0.2, 1).unwrap().punctured().is_empty());
        let p = c.rate_adapt(0.25, 1).unwrap();
        assert_eq!(p.punctured().len(), 200);
        assert!((p.effective_rate() - 0.25).abs() < 1e-12);
        let more = c.rate_adapt(0.3, 1).unwrap();
        assert!(more.punctured().len() > p.punctured().len());
        assert!(matches!(c.rate_adapt(0.1, 1), Err(ReconciliationError::RateBelowMother { .. })));
        assert!(p.punctured().windows(2).all(|w| w[0] < w[1]) && *p.punctured().last().unwrap() < 1000);
    }
}
