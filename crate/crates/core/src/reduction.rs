//! Search-to-volume reduction: a membership oracle for the box
//! `⨉[0, 2^{s_i}]` simulated with at most one query to a search oracle for
//! the hidden string `s` (Hamming weight ≤ 1).

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::Serialize;

use crate::error::Error;
use crate::rng::{stream, streams};

#[derive(Debug)]
pub struct SearchOracle {
    s: Vec<bool>,
    queries: AtomicU64,
}

impl SearchOracle {
    pub fn new(s: Vec<bool>) -> Result<Self, Error> {
        if s.iter().filter(|b| **b).count() > 1 {
            return Err(Error::Input("hidden string must have Hamming weight ≤ 1".into()));
        }
        Ok(Self { s, queries: AtomicU64::new(0) })
    }

    /// `s = 0ⁿ` (`marked = None`) or `s = e_i`.
    pub fn with_marked(n: usize, marked: Option<usize>) -> Result<Self, Error> {
        let mut s = vec![false; n];
        if let Some(i) = marked {
            if i >= n {
                return Err(Error::Input(format!("marked index {i} out of range for n = {n}")));
            }
            s[i] = true;
        }
        Self::new(s)
    }

    /// All `n + 1` admissible strings.
    pub fn all(n: usize) -> Vec<Self> {
        std::iter::once(None)
            .chain((0..n).map(Some))
            .map(|m| Self::with_marked(n, m).expect("index in range"))
            .collect()
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn weight(&self) -> usize {
        self.s.iter().filter(|b| **b).count()
    }

    pub fn hidden(&self) -> &[bool] {
        &self.s
    }

    /// `O_s(i) = s_i`; counted.
    pub fn query(&self, i: usize) -> bool {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.s[i]
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Membership in `⨉[0, 2^{s_i}]` using at most one oracle query.
pub fn mem_s(x: &[f64], oracle: &SearchOracle) -> Result<bool, Error> {
    if x.len() != oracle.n() {
        return Err(Error::Input(format!("point has {} coordinates, oracle has n = {}", x.len(), oracle.n())));
    }
    if x.iter().any(|v| !(0.0..=2.0).contains(v)) {
        return Ok(false);
    }
    let mut high = x.iter().enumerate().filter(|(_, v)| **v > 1.0).map(|(i, _)| i);
    match (high.next(), high.next()) {
        (None, _) => Ok(true),
        (Some(i), None) => Ok(oracle.query(i)),
        (Some(_), Some(_)) => Ok(false),
    }
}

/// Direct membership in `⨉[0, 2^{s_i}]` (no oracle queries).
pub fn direct_membership(x: &[f64], s: &[bool]) -> bool {
    x.iter().zip(s).all(|(v, b)| *v >= 0.0 && *v <= if *b { 2.0 } else { 1.0 })
}

/// Volume of the body seen through `mem_s`, computed exactly by testing
/// the centers of the `2ⁿ` unit cells of `[0,2]ⁿ`. Uses `2ⁿ` membership calls.
pub fn exact_cell_volume(mem: &dyn Fn(&[f64]) -> bool, n: usize) -> f64 {
    let mut count = 0u64;
    let mut x = vec![0.5; n];
    for code in 0u64..(1u64 << n) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = if code >> i & 1 == 1 { 1.5 } else { 0.5 };
        }
        if mem(&x) {
            count += 1;
        }
    }
    count as f64
}

/// `⌊log₂ vol⌉` clamped to `{0, 1}` for any volume estimator run against
/// the `mem_s` body.
pub fn volume_to_search<F>(oracle: &SearchOracle, estimator: F) -> Result<usize, Error>
where
    F: FnOnce(&dyn Fn(&[f64]) -> bool, usize) -> f64,
{
    let mem = |x: &[f64]| mem_s(x, oracle).unwrap_or(false);
    let vol = estimator(&mem, oracle.n());
    if !(vol > 0.0) {
        return Err(Error::Input(format!("volume estimate {vol} is not positive")));
    }
    Ok((vol.log2().round().clamp(0.0, 1.0)) as usize)
}

/// Largest relative error for which rounding `log₂` separates 1 from 2.
pub fn max_relative_error() -> f64 {
    std::f64::consts::SQRT_2 - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub n: usize,
    pub checks: usize,
    pub mismatches: usize,
    pub max_queries_per_call: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub pass: bool,
    pub per_n: Vec<EquivalenceRow>,
}

/// For every `n ≤ n_max` and every admissible `s`, compare `mem_s` with
/// direct membership on `points` random points of `[−¼, 2¼]ⁿ` (a quarter
/// of the coordinates snapped to the breakpoints 0, 1, 2).
pub fn check_equivalence(n_max: usize, points: usize, seed: u64) -> Result<EquivalenceReport, Error> {
    let mut per_n = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (mut checks, mut mismatches, mut max_q) = (0, 0, 0);
        for (si, oracle) in SearchOracle::all(n).into_iter().enumerate() {
            let mut rng = stream(seed, streams::TRIALS + (n as u64) * 1024 + si as u64);
            for _ in 0..points {
                let x: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 0.25 {
                            [0.0, 1.0, 2.0][rng.random_range(0..3)]
                        } else {
                            rng.random_range(-0.25..2.25)
                        }
                    })
                    .collect();
                let before = oracle.queries();
                let got = mem_s(&x, &oracle)?;
                max_q = max_q.max(oracle.queries() - before);
                if got != direct_membership(&x, oracle.hidden()) {
                    mismatches += 1;
                }
                checks += 1;
            }
        }
        per_n.push(EquivalenceRow { n, checks, mismatches, max_queries_per_call: max_q, pass: mismatches == 0 && max_q <= 1 });
    }
    Ok(EquivalenceReport { pass: per_n.iter().all(|r| r.pass), per_n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_examples() {
        let o = SearchOracle::with_marked(4, None).unwrap();
        assert!(mem_s(&[0.5; 4], &o).unwrap());
        assert_eq!(o.queries(), 0);
        let x = [1.5, 1.5, 0.2, 0.2];
        assert!(!mem_s(&x, &o).unwrap());
        assert_eq!(o.queries(), 0);
        let o = SearchOracle::with_marked(4, Some(2)).unwrap();
        assert!(mem_s(&[0.2, 0.9, 1.7, 0.1], &o).unwrap());
        assert_eq!(o.queries(), 1);
    }

    #[test]
    fn boundary_one_is_low() {
        let o = SearchOracle::with_marked(2, None).unwrap();
        assert!(mem_s(&[1.0, 1.0], &o).unwrap());
        assert!(!mem_s(&[2.0 + 1e-12, 0.0], &o).unwrap());
    }

    #[test]
    fn rejects_heavy_strings() {
        assert!(SearchOracle::new(vec![true, true]).is_err());
    }

    #[test]
    fn exact_estimator_recovers_weight() {
        for o in SearchOracle::all(3) {
            let w = volume_to_search(&o, exact_cell_volume).unwrap();
            assert_eq!(w, o.weight());
        }
    }

    #[test]
    fn rounding_is_unambiguous_below_threshold() {
        let eps = max_relative_error() - 1e-9;
        assert!((1.0 + eps) < std::f64::consts::SQRT_2);
        assert!(std::f64::consts::SQRT_2 < 2.0 / (1.0 + eps));
    }
}
