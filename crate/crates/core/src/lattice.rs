//! Exact distributions of sums of i.i.d. or independent finite-support letters.
//!
//! Values are quantized to integer multiples of a fixed step and stored as a
//! sorted sparse list of `(key, probability)` atoms. Sums of `n` letters are
//! built one letter at a time, so the cost is `n` times the number of distinct
//! partial sums times the letter's support.

use crate::error::{Error, Result};

/// Default cap on the number of atoms a lattice may hold.
pub const DEFAULT_ATOM_CAP: usize = 4_000_000;

/// Multiply-adds allowed in one [`LatticePmf::power_upto`] before it gives
/// up with [`Error::LatticeOverflow`].
pub const POWER_WORK_BUDGET: u128 = 4_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePmf {
    step: f64,
    atoms: Vec<(i64, f64)>,
}

impl LatticePmf {
    /// Point mass at zero.
    pub fn delta(step: f64) -> Self {
        LatticePmf { step, atoms: vec![(0, 1.0)] }
    }

    /// Quantizes `(value, probability)` pairs onto the lattice, merging atoms
    /// that land on the same key. Zero-probability atoms are dropped.
    pub fn from_values(values: &[(f64, f64)], step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter(format!("lattice step must be positive, got {step}")));
        }
        let mut atoms = Vec::with_capacity(values.len());
        for &(v, p) in values {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite lattice value {v}")));
            }
            if p > 0.0 {
                atoms.push(((v / step).round() as i64, p));
            }
        }
        Ok(LatticePmf { step, atoms: normalize_atoms(atoms) })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn atoms(&self) -> &[(i64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Iterates `(value, probability)` with values expanded back to reals.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().map(move |&(k, p)| (k as f64 * self.step, p))
    }

    /// Distribution of the sum of two independent lattice variables.
    pub fn convolve(&self, other: &Self, cap: usize) -> Result<Self> {
        self.convolve_upto(other, cap, None)
    }

    /// As [`LatticePmf::convolve`], dropping atoms with keys above `limit`.
    /// Exact for the retained atoms when both operands have nonnegative keys.
    pub fn convolve_upto(&self, other: &Self, cap: usize, limit: Option<i64>) -> Result<Self> {
        debug_assert!((self.step - other.step).abs() <= 1e-15 * self.step);
        if self.atoms.is_empty() || other.atoms.is_empty() {
            return Ok(LatticePmf { step: self.step, atoms: Vec::new() });
        }
        let lo = self.atoms[0].0 + other.atoms[0].0;
        let mut hi = self.atoms[self.atoms.len() - 1].0 + other.atoms[other.atoms.len() - 1].0;
        if let Some(l) = limit {
            if lo > l {
                return Ok(LatticePmf { step: self.step, atoms: Vec::new() });
            }
            hi = hi.min(l);
        }
        let span = (hi - lo) as u128 + 1;
        let pairs = self.atoms.len() as u128 * other.atoms.len() as u128;
        let atoms = if span <= 8 * pairs.max(1024) && span <= 64_000_000 {
            let mut dense = vec![0.0f64; span as usize];
            for &(ka, pa) in &self.atoms {
                for &(kb, pb) in &other.atoms {
                    let k = ka + kb;
                    if k > hi {
                        break;
                    }
                    dense[(k - lo) as usize] += pa * pb;
                }
            }
            let atoms: Vec<(i64, f64)> = dense
                .into_iter()
                .enumerate()
                .filter(|&(_, p)| p > 0.0)
                .map(|(i, p)| (lo + i as i64, p))
                .collect();
            atoms
        } else {
            if pairs > 16 * cap as u128 {
                return Err(Error::LatticeOverflow(cap));
            }
            let mut atoms = Vec::with_capacity(pairs as usize);
            for &(ka, pa) in &self.atoms {
                for &(kb, pb) in &other.atoms {
                    if ka + kb > hi {
                        break;
                    }
                    atoms.push((ka + kb, pa * pb));
                }
            }
            normalize_atoms(atoms)
        };
        if atoms.len() > cap {
            return Err(Error::LatticeOverflow(cap));
        }
        Ok(LatticePmf { step: self.step, atoms })
    }

    /// Distribution of the sum of `n` independent copies.
    pub fn power(&self, n: u64, cap: usize) -> Result<Self> {
        self.power_upto(n, cap, None)
    }

    /// As [`LatticePmf::power`], dropping keys above `limit` along the way.
    pub fn power_upto(&self, n: u64, cap: usize, limit: Option<i64>) -> Result<Self> {
        let mut result = LatticePmf::delta(self.step);
        let mut work = 0u128;
        for _ in 0..n {
            work += result.atoms.len() as u128 * self.atoms.len() as u128;
            if work > POWER_WORK_BUDGET {
                return Err(Error::LatticeOverflow(cap));
            }
            result = result.convolve_upto(self, cap, limit)?;
        }
        Ok(result)
    }

    /// Sum of `p · exp(-rate · (top - value))` over atoms with value `≤ top`,
    /// in log space.
    pub fn ln_tilted_lower(&self, top: f64, rate: f64) -> f64 {
        let khi = (top / self.step + 1e-9).floor();
        let terms: Vec<f64> = self
            .atoms
            .iter()
            .filter(|a| a.0 as f64 <= khi && a.1 > 0.0)
            .map(|&(k, p)| p.ln() - rate * (top - k as f64 * self.step).max(0.0))
            .collect();
        crate::math::log_sum_exp(&terms)
    }

    /// `Pr[sum ≥ threshold]` on the quantized values.
    pub fn tail_ge(&self, threshold: f64) -> f64 {
        let key = (threshold / self.step - 1e-9).ceil();
        self.atoms.iter().filter(|a| a.0 as f64 >= key).map(|a| a.1).sum()
    }

    /// `Pr[sum > threshold]` on the quantized values.
    pub fn tail_gt(&self, threshold: f64) -> f64 {
        let key = (threshold / self.step + 1e-9).floor();
        self.atoms.iter().filter(|a| a.0 as f64 > key).map(|a| a.1).sum()
    }

    /// `Pr[lo ≤ sum ≤ hi]` on the quantized values.
    pub fn window(&self, lo: f64, hi: f64) -> f64 {
        let klo = (lo / self.step - 1e-9).ceil();
        let khi = (hi / self.step + 1e-9).floor();
        self.atoms
            .iter()
            .filter(|a| a.0 as f64 >= klo && a.0 as f64 <= khi)
            .map(|a| a.1)
            .sum()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(v, p)| p * f(v)).sum()
    }
}

fn normalize_atoms(mut atoms: Vec<(i64, f64)>) -> Vec<(i64, f64)> {
    atoms.sort_unstable_by_key(|a| a.0);
    let mut out: Vec<(i64, f64)> = Vec::with_capacity(atoms.len());
    for (k, p) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += p,
            _ => out.push((k, p)),
        }
    }
    out
}

/// Picks a lattice step for the given values: their common grid when they
/// all sit on one (integers, halves, ...), otherwise `fallback`.
pub fn natural_step(values: &[f64], fallback: f64) -> f64 {
    let positive: Vec<f64> = values.iter().cloned().filter(|v| *v > 0.0).collect();
    if positive.is_empty() {
        return 1.0;
    }
    for denom in [1.0, 2.0, 4.0, 5.0, 8.0, 10.0, 100.0, 1000.0] {
        let step = 1.0 / denom;
        if positive
            .iter()
            .all(|v| ((v / step) - (v / step).round()).abs() < 1e-9)
        {
            return step;
        }
    }
    fallback
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
        let ln = crate::math::lgamma(n as f64 + 1.0)
            - crate::math::lgamma(k as f64 + 1.0)
            - crate::math::lgamma((n - k) as f64 + 1.0)
            + k as f64 * p.ln()
            + (n - k) as f64 * (1.0 - p).ln();
        ln.exp()
    }

    #[test]
    fn bernoulli_power_is_binomial() {
        let b = LatticePmf::from_values(&[(0.0, 0.7), (1.0, 0.3)], 1.0).unwrap();
        let s = b.power(50, DEFAULT_ATOM_CAP).unwrap();
        assert_eq!(s.len(), 51);
        for (v, p) in s.iter() {
            let exact = binomial_pmf(50, 0.3, v as u64);
            assert!((p - exact).abs() < 1e-12 * exact.max(1e-300), "k={v}");
        }
        assert!((s.total_mass() - 1.0).abs() < 1e-13);
        assert!((s.tail_ge(15.0) + s.window(0.0, 14.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn irrational_atoms_keep_types_apart() {
        let a = LatticePmf::from_values(&[(0.0, 0.5), (std::f64::consts::LN_2, 0.5)], 1e-6).unwrap();
        let s = a.power(10, DEFAULT_ATOM_CAP).unwrap();
        assert_eq!(s.len(), 11);
        let m = s.expect(|v| v);
        assert!((m - 5.0 * std::f64::consts::LN_2).abs() < 1e-5);
    }

    #[test]
    fn overflow_is_reported() {
        let vals: Vec<(f64, f64)> = (0..16).map(|i| ((i as f64).sqrt() * 1.37, 1.0 / 16.0)).collect();
        let a = LatticePmf::from_values(&vals, 1e-9).unwrap();
        assert!(matches!(a.power(200, 10_000), Err(Error::LatticeOverflow(_))));
    }

    #[test]
    fn truncation_keeps_lower_atoms_exact() {
        let b = LatticePmf::from_values(&[(0.0, 0.6), (1.0, 0.3), (2.0, 0.1)], 1.0).unwrap();
        let full = b.power(40, DEFAULT_ATOM_CAP).unwrap();
        let cut = b.power_upto(40, DEFAULT_ATOM_CAP, Some(12)).unwrap();
        assert_eq!(cut.atoms().last().unwrap().0, 12);
        for (&(k, p), &(k2, p2)) in cut.atoms().iter().zip(full.atoms()) {
            assert_eq!(k, k2);
            assert!((p - p2).abs() <= 1e-15 * p2.max(1e-300));
        }
        let direct: f64 = full.iter().filter(|a| a.0 <= 12.0).map(|(v, p)| p * (-0.7 * (12.0 - v)).exp()).sum();
        assert!((cut.ln_tilted_lower(12.0, 0.7) - direct.ln()).abs() < 1e-13);
    }

    #[test]
    fn natural_steps() {
        assert_eq!(natural_step(&[0.0, 1.0, 3.0], 1e-6), 1.0);
        assert_eq!(natural_step(&[0.5, 1.5], 1e-6), 0.5);
        assert_eq!(natural_step(&[0.1234567, 1.0], 1e-6), 1e-6);
    }
}
