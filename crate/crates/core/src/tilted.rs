//! Conditional information densities and the conditional D-tilted
//! information density
//!
//! `j(x,D|s) = -ln Σ_y P_{Y*|S}(y|s) exp{λ*D - λ*d(x,y)}`
//!
//! with its moments: the mean is `R(X;D|S)` and the variance is the
//! dispersion `V`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crd::CrdSolution;
use crate::error::{Error, Result};
use crate::math::{gaussian_q_inv, Nats};
use crate::mc::chunk_rng;
use crate::source::Instance;

/// Table of `j(x,D|s)` with its moments under `P_XS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedField {
    pub x_size: usize,
    pub s_size: usize,
    /// `[x * s_size + s]`, nats. Entries outside the support of `P_XS` are
    /// still defined whenever the output law reaches a finite value.
    pub table: Vec<f64>,
    pub mean: Nats,
    /// `V = E[j²] - E[j]²`.
    pub variance: f64,
    /// Per-letter `E|j - E j|³`.
    pub third_abs: f64,
    /// `E[j | S = s]`.
    pub per_state_mean: Vec<f64>,
    /// `V_s = var(j | S = s)`.
    pub per_state_var: Vec<f64>,
    pub slope: f64,
    pub distortion: f64,
}

impl TiltedField {
    #[inline]
    pub fn j(&self, x: usize, s: usize) -> f64 {
        self.table[x * self.s_size + s]
    }

    /// Rebuilds the moments after the table has been edited.
    pub fn refresh(&mut self, inst: &Instance) {
        let (mean, variance, third_abs, per_state_mean, per_state_var) = moments(&self.table, inst);
        self.mean = Nats(mean);
        self.variance = variance;
        self.third_abs = third_abs;
        self.per_state_mean = per_state_mean;
        self.per_state_var = per_state_var;
    }

    /// `(value, probability)` pairs of the per-letter density under `P_XS`.
    pub fn letter_law(&self, inst: &Instance) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for x in 0..self.x_size {
            for s in 0..self.s_size {
                let p = inst.source.p(x, s);
                if p > 0.0 {
                    out.push((self.j(x, s), p));
                }
            }
        }
        out
    }
}

fn moments(table: &[f64], inst: &Instance) -> (f64, f64, f64, Vec<f64>, Vec<f64>) {
    let (nx, ns) = (inst.x_size(), inst.s_size());
    let mut mean = 0.0;
    for x in 0..nx {
        for s in 0..ns {
            let p = inst.source.p(x, s);
            if p > 0.0 {
                mean += p * table[x * ns + s];
            }
        }
    }
    let mut variance = 0.0;
    let mut third_abs = 0.0;
    let mut per_state_mean = vec![0.0; ns];
    let mut per_state_var = vec![0.0; ns];
    for s in 0..ns {
        let ps = inst.source.p_s()[s];
        if ps <= 0.0 {
            continue;
        }
        let m: f64 = (0..nx).map(|x| inst.source.p(x, s) / ps * table[x * ns + s]).filter(|v| v.is_finite()).sum();
        per_state_mean[s] = m;
        per_state_var[s] = (0..nx)
            .filter(|&x| inst.source.p(x, s) > 0.0)
            .map(|x| inst.source.p(x, s) / ps * (table[x * ns + s] - m).powi(2))
            .sum();
    }
    for x in 0..nx {
        for s in 0..ns {
            let p = inst.source.p(x, s);
            if p > 0.0 {
                let e = table[x * ns + s] - mean;
                variance += p * e * e;
                third_abs += p * e.abs().powi(3);
            }
        }
    }
    (mean, variance, third_abs, per_state_mean, per_state_var)
}

/// Evaluates the tilted density on every `(x, s)` from the optimal output law
/// and slope of `solution`. The zero-rate regime yields the all-zeros table.
pub fn tilted_density(solution: &CrdSolution, inst: &Instance) -> Result<TiltedField> {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    if solution.x_size != nx || solution.s_size != ns || solution.y_size != ny {
        return Err(Error::SupportMismatch("solution and instance alphabets differ".into()));
    }
    let lambda = solution.slope;
    let target = solution.target;
    let mut table = vec![0.0; nx * ns];
    if !solution.is_zero_rate() {
        for s in 0..ns {
            let q = solution.induced_row(s);
            for x in 0..nx {
                let dmin = inst.dist.d_min_x(x);
                let v = if lambda.is_infinite() {
                    let mass: f64 = (0..ny).filter(|&y| inst.dist.d(x, y) <= dmin).map(|y| q[y]).sum();
                    if (dmin - target).abs() > 1e-12 {
                        return Err(Error::Domain(format!(
                            "tilted density is unbounded at the distortion floor {target} for letter {x}"
                        )));
                    }
                    -mass.ln()
                } else {
                    let z: f64 = (0..ny).map(|y| q[y] * (-lambda * (inst.dist.d(x, y) - dmin)).exp()).sum();
                    -lambda * (target - dmin) - z.ln()
                };
                if !v.is_finite() && inst.source.p(x, s) > 0.0 {
                    return Err(Error::SupportMismatch(format!(
                        "output law of state {s} puts no mass near letter {x}"
                    )));
                }
                table[x * ns + s] = v;
            }
        }
    }
    let (mean, variance, third_abs, per_state_mean, per_state_var) = moments(&table, inst);
    Ok(TiltedField {
        x_size: nx,
        s_size: ns,
        table,
        mean: Nats(mean),
        variance,
        third_abs,
        per_state_mean,
        per_state_var,
        slope: if solution.is_zero_rate() { 0.0 } else { lambda },
        distortion: target,
    })
}

/// Conditional information densities of a solved instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoDensities {
    pub x_size: usize,
    pub s_size: usize,
    pub y_size: usize,
    /// `ln P_{Y*|XS}(y|x,s) / P_{Y*|S}(y|s)` as `[(x * s_size + s) * y_size + y]`;
    /// `NaN` off the support of the channel.
    pub i_xy_given_s: Vec<f64>,
    /// `-ln P_{X|S}(x|s)` as `[x * s_size + s]`; `+∞` off the support.
    pub i_x_given_s: Vec<f64>,
}

pub fn info_densities(solution: &CrdSolution, inst: &Instance) -> InfoDensities {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let mut i_xy = vec![f64::NAN; nx * ns * ny];
    let mut i_x = vec![f64::INFINITY; nx * ns];
    for s in 0..ns {
        let ps = inst.source.p_s()[s];
        for x in 0..nx {
            if ps > 0.0 && inst.source.p(x, s) > 0.0 {
                i_x[x * ns + s] = -(inst.source.p(x, s) / ps).ln();
            }
            for y in 0..ny {
                let w = solution.channel(y, x, s);
                let q = solution.induced(y, s);
                if w > 0.0 && q > 0.0 {
                    i_xy[(x * ns + s) * ny + y] = (w / q).ln();
                }
            }
        }
    }
    InfoDensities { x_size: nx, s_size: ns, y_size: ny, i_xy_given_s: i_xy, i_x_given_s: i_x }
}

/// Channel entries below this are treated as outside the optimal support.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

/// Worst-case slacks of the three tilted-density properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `max |j - i_{X;Y*|S} - λ*d + λ*D|` over the optimal support.
    pub pointwise: f64,
    /// `|E[j] - R|`.
    pub mean: f64,
    /// Largest `E[exp{λ*D - λ*d(X,Y) + j}]` over the random output laws.
    pub exp_moment_max: f64,
    /// Same expectation at the optimal output law.
    pub exp_moment_optimal: f64,
    pub trials: usize,
    pub failures: Vec<String>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `E_{P_XS × r}[exp{λ*D - λ*d(X,Y) + j(X,D|S)}]` for an output law
/// `r` laid out as `[s * y_size + y]`.
pub fn exp_moment(field: &TiltedField, inst: &Instance, r: &[f64]) -> f64 {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let lambda = field.slope;
    let mut total = 0.0;
    for x in 0..nx {
        for s in 0..ns {
            let p = inst.source.p(x, s);
            if p <= 0.0 {
                continue;
            }
            let j = field.j(x, s);
            for y in 0..ny {
                let ry = r[s * ny + y];
                if ry > 0.0 {
                    let e = if lambda.is_infinite() {
                        if inst.dist.d(x, y) <= field.distortion { j.exp() } else { 0.0 }
                    } else {
                        (lambda * (field.distortion - inst.dist.d(x, y)) + j).exp()
                    };
                    total += p * ry * e;
                }
            }
        }
    }
    total
}

/// Checks the pointwise identity, the mean identity and the exponential
/// moment bound over `trials` Dirichlet(1,…,1) output laws.
pub fn check_tilted_identities(
    field: &TiltedField,
    solution: &CrdSolution,
    inst: &Instance,
    trials: usize,
    seed: u64,
) -> IdentityReport {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let lambda = field.slope;
    let mut failures = Vec::new();

    let mut pointwise: f64 = 0.0;
    if !solution.is_zero_rate() && lambda.is_finite() {
        let dens = info_densities(solution, inst);
        for x in 0..nx {
            for s in 0..ns {
                if inst.source.p(x, s) <= 0.0 {
                    continue;
                }
                for y in 0..ny {
                    if solution.channel(y, x, s) <= SUPPORT_THRESHOLD {
                        continue;
                    }
                    let i = dens.i_xy_given_s[(x * ns + s) * ny + y];
                    let rhs = i + lambda * inst.dist.d(x, y) - lambda * field.distortion;
                    pointwise = pointwise.max((field.j(x, s) - rhs).abs());
                }
            }
        }
    }
    if pointwise > 1e-8 {
        failures.push(format!("pointwise identity off by {pointwise:.3e}"));
    }

    let mean = (field.mean.0 - solution.rate.0).abs();
    if mean > 1e-8 {
        failures.push(format!("mean differs from the rate by {mean:.3e}"));
    }

    let exp_moment_optimal = exp_moment(field, inst, &solution.induced);
    let draws: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = chunk_rng(seed, t as u64);
            let mut r = vec![0.0; ns * ny];
            for s in 0..ns {
                let row = &mut r[s * ny..(s + 1) * ny];
                for v in row.iter_mut() {
                    *v = -(1.0 - rng.random::<f64>()).ln();
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
            }
            exp_moment(field, inst, &r)
        })
        .collect();
    let exp_moment_max = draws.iter().cloned().fold(exp_moment_optimal, f64::max);
    if exp_moment_max > 1.0 + 1e-9 {
        failures.push(format!("exponential moment reaches {exp_moment_max:.12}"));
    }
    IdentityReport { pointwise, mean, exp_moment_max, exp_moment_optimal, trials, failures }
}

/// Dispersion with its law-of-total-variance split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub v: f64,
    /// `E[V_S]`.
    pub within: f64,
    /// `var(E[j | S])`.
    pub between: f64,
}

impl Dispersion {
    pub fn decomposition_error(&self) -> f64 {
        (self.v - self.within - self.between).abs()
    }
}

pub fn dispersion_v(field: &TiltedField, inst: &Instance) -> Dispersion {
    let p_s = inst.source.p_s();
    let within = field.per_state_var.iter().zip(p_s).map(|(v, p)| p * v).sum();
    let between = field
        .per_state_mean
        .iter()
        .zip(p_s)
        .map(|(m, p)| p * (m - field.mean.0).powi(2))
        .sum();
    Dispersion { v: field.variance, within, between }
}

/// Second-order behaviour of codes at first-order rate `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SecondOrder {
    PlusInfinity,
    Finite(f64),
    MinusInfinity,
}

/// Optimal second-order rate `L*` for first-order rate `kappa`.
pub fn second_order_classifier(kappa: f64, rate: f64, v: f64, eps: f64) -> Result<SecondOrder> {
    if (kappa - rate).abs() <= 1e-12 {
        Ok(SecondOrder::Finite(v.max(0.0).sqrt() * gaussian_q_inv(eps)?))
    } else if kappa < rate {
        Ok(SecondOrder::PlusInfinity)
    } else {
        Ok(SecondOrder::MinusInfinity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crd::{solve_crd, SolverOptions};
    use crate::math::binary_entropy;
    use crate::source::binary_example;

    #[test]
    fn binary_table() {
        let inst = binary_example(0.4, 0.2);
        let sol = solve_crd(&inst, 0.1, &SolverOptions::default()).unwrap();
        let f = tilted_density(&sol, &inst).unwrap();
        let h = binary_entropy(0.1);
        for s in 0..2 {
            assert!((f.j(0, s) - (-(0.8f64).ln() - h)).abs() < 1e-9);
            assert!((f.j(1, s) - (-(0.2f64).ln() - h)).abs() < 1e-9);
        }
        let v = 0.16 * 4f64.ln().powi(2);
        assert!((f.variance - v).abs() < 1e-9);
        let d = dispersion_v(&f, &inst);
        assert!(d.decomposition_error() < 1e-12);
        let rep = check_tilted_identities(&f, &sol, &inst, 100, 1);
        assert!(rep.passed(), "{:?}", rep.failures);
        assert!((rep.exp_moment_optimal - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rate_table() {
        let inst = binary_example(0.4, 0.2);
        let sol = solve_crd(&inst, 0.25, &SolverOptions::default()).unwrap();
        let f = tilted_density(&sol, &inst).unwrap();
        assert!(f.table.iter().all(|&v| v == 0.0));
        assert_eq!(f.variance, 0.0);
    }

    #[test]
    fn corrupted_mean_is_caught() {
        let inst = binary_example(0.4, 0.2);
        let sol = solve_crd(&inst, 0.1, &SolverOptions::default()).unwrap();
        let mut f = tilted_density(&sol, &inst).unwrap();
        f.table.iter_mut().for_each(|v| *v += 0.01);
        f.refresh(&inst);
        let rep = check_tilted_identities(&f, &sol, &inst, 10, 1);
        assert!((rep.mean - 0.01).abs() < 1e-8);
        assert!(!rep.passed());
    }

    #[test]
    fn classifier() {
        assert_eq!(second_order_classifier(1.0, 1.0, 0.3, 0.5).unwrap(), SecondOrder::Finite(0.0));
        assert_eq!(second_order_classifier(0.99, 1.0, 0.3, 0.1).unwrap(), SecondOrder::PlusInfinity);
        assert_eq!(second_order_classifier(1.01, 1.0, 0.3, 0.1).unwrap(), SecondOrder::MinusInfinity);
        let v = 0.16 * 4f64.ln().powi(2);
        match second_order_classifier(0.2, 0.2, v, 0.1).unwrap() {
            SecondOrder::Finite(l) => assert!((l - 0.71066).abs() < 1e-4),
            other => panic!("{other:?}"),
        }
    }
}
