//! Markov sources with side information.
//!
//! The pairs `(Xᵢ, Sᵢ)` form a stationary, irreducible, aperiodic chain with
//! transition matrix `Ξ` on the states `u = x·s_size + s`. All tilted
//! quantities are those of the single-letter problem at `P_XS = π`:
//! `μ = R(X;D|S)` at `π`, and
//!
//! `V∞ = var j + 2 Σ_{k≥1} cov[j(U₁), j(U_{1+k})]`.
//!
//! Covariances come from `cov_k = Σ_u π(u) j̃(u) (Ξᵏ j̃)(u)` with
//! `j̃ = j - μ`. The spectral form diagonalizes `Ξ = U Λ U⁻¹` and weights
//! each eigendirection by `(1+λ)/(1-λ)`.

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{second_order_rate, DensitySum};
use crate::crd::{solve_crd, CrdSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::math::Nats;
use crate::mc::{chunk_rng, map_trials, DEFAULT_CHUNK};
use crate::source::{validate, DistortionSpec, Instance, JointSource, SequencePair};
use crate::tilted::{tilted_density, TiltedField};

/// Tolerance on `π Ξ = π`.
pub const STATIONARY_RESIDUAL: f64 = 1e-12;
pub const LADDER_MAX_LAGS: usize = 10_000;
/// Lags with `|cov_k|` below this count towards truncation.
pub const LADDER_NEGLIGIBLE: f64 = 1e-14;
pub const LADDER_PATIENCE: usize = 5;
/// Largest eigenbasis condition number accepted by [`v_inf_spectral`].
pub const MAX_EIGENBASIS_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    pub x_size: usize,
    pub s_size: usize,
    /// Row-major `K × K`.
    pub xi: Vec<f64>,
    pub pi: Vec<f64>,
    pub dist: DistortionSpec,
}

impl MarkovModel {
    pub fn new(x_size: usize, s_size: usize, xi: &[Vec<f64>], dist: DistortionSpec) -> Result<Self> {
        let k = x_size * s_size;
        if k == 0 {
            return Err(Error::EmptyAlphabet("X × S"));
        }
        if xi.len() != k || xi.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("transition matrix must be {k} × {k}")));
        }
        if dist.x_size() != x_size {
            return Err(Error::Shape(format!(
                "distortion has {} rows but the source alphabet has {x_size} symbols",
                dist.x_size()
            )));
        }
        let flat: Vec<f64> = xi.iter().flatten().copied().collect();
        check_chain(&flat, k)?;
        let pi = stationary_law(&flat, k)?;
        Ok(MarkovModel { x_size, s_size, xi: flat, pi, dist })
    }

    /// Chain whose every row is `P_XS`: an i.i.d. source.
    pub fn iid(inst: &Instance) -> Result<Self> {
        let row = inst.source.pmf().to_vec();
        let xi = vec![row; inst.x_size() * inst.s_size()];
        Self::new(inst.x_size(), inst.s_size(), &xi, inst.dist.clone())
    }

    pub fn states(&self) -> usize {
        self.x_size * self.s_size
    }

    pub fn xi(&self, u: usize, v: usize) -> f64 {
        self.xi[u * self.states() + v]
    }

    pub fn xi_rows(&self) -> Vec<Vec<f64>> {
        self.xi.chunks(self.states()).map(|r| r.to_vec()).collect()
    }

    /// Single-letter instance with `P_XS = π`.
    pub fn marginal_instance(&self) -> Result<Instance> {
        let source = JointSource::from_flat(self.x_size, self.s_size, self.pi.clone())?;
        validate(source, self.dist.clone())
    }

    /// `max_v |(π Ξ)(v) - π(v)|`.
    pub fn stationarity_residual(&self) -> f64 {
        left_residual(&self.xi, &self.pi, self.states())
    }
}

fn left_residual(xi: &[f64], pi: &[f64], k: usize) -> f64 {
    (0..k)
        .map(|v| ((0..k).map(|u| pi[u] * xi[u * k + v]).sum::<f64>() - pi[v]).abs())
        .fold(0.0, f64::max)
}

/// Checks that `xi` is row-stochastic, irreducible and aperiodic.
pub fn check_chain(xi: &[f64], k: usize) -> Result<()> {
    for u in 0..k {
        let row = &xi[u * k..(u + 1) * k];
        for (v, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { row: u, col: v });
            }
            if p < 0.0 {
                return Err(Error::NegativeProbability { row: u, col: v, value: p });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::RowSum { sum });
        }
    }
    let forward = bfs_levels(xi, k, false);
    let backward = bfs_levels(xi, k, true);
    let stray: Vec<usize> = (0..k).filter(|&u| forward[u].is_none() || backward[u].is_none()).collect();
    if !stray.is_empty() {
        return Err(Error::Reducible(stray));
    }
    let period = chain_period(xi, k, &forward);
    if period != 1 {
        return Err(Error::Periodic(period));
    }
    Ok(())
}

fn bfs_levels(xi: &[f64], k: usize, reverse: bool) -> Vec<Option<usize>> {
    let mut level = vec![None; k];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for v in 0..k {
            let p = if reverse { xi[v * k + u] } else { xi[u * k + v] };
            if p > 0.0 && level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn chain_period(xi: &[f64], k: usize, level: &[Option<usize>]) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut g = 0;
    for u in 0..k {
        for v in 0..k {
            if xi[u * k + v] > 0.0 {
                let (lu, lv) = (level[u].unwrap() as i64, level[v].unwrap() as i64);
                g = gcd(g, (lu + 1 - lv).unsigned_abs() as usize);
            }
        }
    }
    g
}

/// Stationary law of an irreducible chain: inverse iteration on `Ξᵀ` near
/// eigenvalue 1, then power iteration if the residual is not yet below
/// [`STATIONARY_RESIDUAL`].
pub fn stationary_law(xi: &[f64], k: usize) -> Result<Vec<f64>> {
    let a = DMatrix::from_row_slice(k, k, xi).transpose() - DMatrix::identity(k, k) * (1.0 + 1e-10);
    let mut pi = vec![1.0 / k as f64; k];
    if let Some(lu) = Some(a.lu()).filter(|lu| lu.is_invertible()) {
        for _ in 0..3 {
            match lu.solve(&DVector::from_vec(pi.clone())) {
                Some(v) => {
                    let total: f64 = v.iter().sum();
                    if !(total.is_finite() && total != 0.0) {
                        break;
                    }
                    pi = v.iter().map(|x| (x / total).max(0.0)).collect();
                    let t: f64 = pi.iter().sum();
                    pi.iter_mut().for_each(|x| *x /= t);
                }
                None => break,
            }
        }
    }
    let mut iters = 0;
    while left_residual(xi, &pi, k) > STATIONARY_RESIDUAL {
        if iters == 1_000_000 {
            return Err(Error::NonConvergence { iterations: iters, gap: left_residual(xi, &pi, k) });
        }
        let next: Vec<f64> = (0..k).map(|v| (0..k).map(|u| pi[u] * xi[u * k + v]).sum()).collect();
        let t: f64 = next.iter().sum();
        pi = next.into_iter().map(|x| x / t).collect();
        iters += 1;
    }
    Ok(pi)
}

// ---------------------------------------------------------------------------
// Covariances.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceLadder {
    /// `var j` under `π`.
    pub lag0: f64,
    /// `covs[k-1] = cov[j(U₁), j(U_{1+k})]`.
    pub covs: Vec<f64>,
    /// `lag0 + 2 Σ covs`.
    pub v_inf: f64,
    /// Bound on `2 Σ` over the lags not computed.
    pub remainder: f64,
    /// Observed geometric decay rate of `‖Ξᵏ j̃‖∞`.
    pub decay: f64,
}

/// Lag covariances of `j` along the stationary chain.
pub fn covariance_ladder(model: &MarkovModel, j: &[f64]) -> CovarianceLadder {
    let k = model.states();
    let mu: f64 = model.pi.iter().zip(j).map(|(p, v)| p * v).sum();
    let jt: Vec<f64> = j.iter().map(|v| v - mu).collect();
    let inner = |h: &[f64]| -> f64 { (0..k).map(|u| model.pi[u] * jt[u] * h[u]).sum() };
    let sup = |h: &[f64]| h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lag0 = inner(&jt);
    let mut h = jt.clone();
    let mut norms = vec![sup(&h)];
    let mut covs = Vec::new();
    let mut quiet = 0;
    while covs.len() < LADDER_MAX_LAGS && quiet < LADDER_PATIENCE {
        h = (0..k).map(|u| (0..k).map(|v| model.xi[u * k + v] * h[v]).sum()).collect();
        let c = inner(&h);
        quiet = if c.abs() < LADDER_NEGLIGIBLE { quiet + 1 } else { 0 };
        covs.push(c);
        norms.push(sup(&h));
    }
    let last = norms.len() - 1;
    let back = last.min(10);
    let decay = if back == 0 || norms[last - back] == 0.0 {
        0.0
    } else {
        (norms[last] / norms[last - back]).powf(1.0 / back as f64)
    };
    let weight: f64 = (0..k).map(|u| model.pi[u] * jt[u].abs()).sum();
    let remainder = if norms[last] == 0.0 {
        0.0
    } else if decay < 1.0 {
        2.0 * weight * norms[last] * decay / (1.0 - decay)
    } else {
        f64::INFINITY
    };
    let v_inf = lag0 + 2.0 * covs.iter().sum::<f64>();
    CovarianceLadder { lag0, covs, v_inf, remainder, decay }
}

/// `V_n = lag0 + (2/n) Σ_{k<n} (n-k) cov_k`.
pub fn v_n(ladder: &CovarianceLadder, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let nf = n as f64;
    let s: f64 = ladder.covs.iter().take(n.saturating_sub(1)).enumerate().map(|(i, c)| (nf - (i + 1) as f64) * c).sum();
    ladder.lag0 + 2.0 * s / nf
}

/// Tilted quantities of a Markov source at distortion `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTilted {
    /// `R(X;D|S)` at `P_XS = π`.
    pub mu: Nats,
    /// `j(u)` per chain state.
    pub j: Vec<f64>,
    pub ladder: CovarianceLadder,
    pub solution: CrdSolution,
    pub field: TiltedField,
}

pub fn markov_tilted_quantities(model: &MarkovModel, distortion: f64, opts: &SolverOptions) -> Result<MarkovTilted> {
    let inst = model.marginal_instance()?;
    let solution = solve_crd(&inst, distortion, opts)?;
    let field = tilted_density(&solution, &inst)?;
    let j: Vec<f64> = (0..model.states()).map(|u| field.j(u / model.s_size, u % model.s_size)).collect();
    let ladder = covariance_ladder(model, &j);
    Ok(MarkovTilted { mu: solution.rate, j, ladder, solution, field })
}

/// `μ + √(V∞/n) Q⁻¹(ε)`.
pub fn markov_second_order_rate(t: &MarkovTilted, n: usize, eps: f64) -> Result<f64> {
    second_order_rate(n, eps, t.mu.0, t.ladder.v_inf)
}

// ---------------------------------------------------------------------------
// Spectral form.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralV {
    pub v_inf: f64,
    /// Condition number of the eigenbasis, infinite when none was found.
    pub condition: f64,
    /// `(re, im)` eigenvalues of `Ξ`.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Set when the ladder value was returned instead.
    pub warning: Option<String>,
}

/// `V∞` from the eigendecomposition of `Ξ`; returns the ladder value with a
/// warning when `Ξ` is not diagonalizable to within
/// [`MAX_EIGENBASIS_CONDITION`].
pub fn v_inf_spectral(model: &MarkovModel, j: &[f64], ladder: &CovarianceLadder) -> SpectralV {
    let k = model.states();
    let a = DMatrix::from_row_slice(k, k, &model.xi);
    let mut eig: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let eigenvalues: Vec<(f64, f64)> = eig.iter().map(|c| (c.re, c.im)).collect();
    let fallback = |condition: f64, why: String| SpectralV {
        v_inf: ladder.v_inf,
        condition,
        eigenvalues: eigenvalues.clone(),
        warning: Some(why),
    };
    let basis = match eigenbasis(&a, &eig) {
        Ok(b) => b,
        Err(why) => return fallback(f64::INFINITY, why),
    };
    let (u, lambdas) = basis;
    let sv = u.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_EIGENBASIS_CONDITION) {
        return fallback(condition, format!("eigenbasis condition {condition:e} too large; using the ladder"));
    }
    let mu: f64 = model.pi.iter().zip(j).map(|(p, v)| p * v).sum();
    let jt = DVector::from_iterator(k, j.iter().map(|v| Complex::new(v - mu, 0.0)));
    let coeff = match u.clone().lu().solve(&jt) {
        Some(c) => c,
        None => return fallback(condition, "eigenbasis is singular; using the ladder".into()),
    };
    let one = Complex::new(1.0, 0.0);
    let weighted = DVector::from_iterator(
        k,
        lambdas.iter().zip(coeff.iter()).map(|(&l, &c)| {
            let w = if (l - one).norm() < 1e-8 { one } else { (one + l) / (one - l) };
            w * c
        }),
    );
    let wj = &u * weighted;
    let v_inf: f64 = (0..k).map(|i| model.pi[i] * (jt[i] * wj[i]).re).sum();
    SpectralV { v_inf, condition, eigenvalues, warning: None }
}

// Right eigenvectors, clustering eigenvalues closer than 1e-8 and taking
// the null space of Ξ - λI for each cluster.
type Basis = (DMatrix<Complex<f64>>, Vec<Complex<f64>>);

fn eigenbasis(a: &DMatrix<f64>, eig: &[Complex<f64>]) -> std::result::Result<Basis, String> {
    let k = a.nrows();
    let ac = a.map(|v| Complex::new(v, 0.0));
    let scale = a.norm().max(1.0);
    let mut cols: Vec<DVector<Complex<f64>>> = Vec::with_capacity(k);
    let mut lambdas = Vec::with_capacity(k);
    let mut used = vec![false; k];
    for i in 0..k {
        if used[i] {
            continue;
        }
        let members: Vec<usize> = (i..k).filter(|&j| !used[j] && (eig[j] - eig[i]).norm() < 1e-8).collect();
        members.iter().for_each(|&j| used[j] = true);
        let m = members.len();
        let center = members.iter().map(|&j| eig[j]).sum::<Complex<f64>>() / m as f64;
        let b = &ac - DMatrix::identity(k, k) * center;
        let svd = b.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        if svd.singular_values[order[m - 1]] > 1e-6 * scale {
            return Err(format!("eigenvalue {center} is defective; using the ladder"));
        }
        for &idx in order.iter().take(m) {
            cols.push(vt.row(idx).transpose().map(|c| c.conj()));
            lambdas.push(center);
        }
    }
    Ok((DMatrix::from_columns(&cols), lambdas))
}

// ---------------------------------------------------------------------------
// Sampling.

struct ChainSampler {
    start: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
    s_size: usize,
}

impl ChainSampler {
    fn new(model: &MarkovModel) -> Self {
        let k = model.states();
        ChainSampler {
            start: WeightedIndex::new(model.pi.iter().copied()).expect("stationary law has mass"),
            rows: (0..k)
                .map(|u| WeightedIndex::new(model.xi[u * k..(u + 1) * k].iter().copied()).expect("stochastic row"))
                .collect(),
            s_size: model.s_size,
        }
    }

    fn path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        let mut u = self.start.sample(rng);
        out.push(u);
        for _ in 1..n {
            u = self.rows[u].sample(rng);
            out.push(u);
        }
        out
    }
}

/// A length-`n` path started from `π`, reproducible from `seed`.
pub fn sample_markov(model: &MarkovModel, n: usize, seed: u64) -> SequencePair {
    let sampler = ChainSampler::new(model);
    let mut rng = chunk_rng(seed, 0);
    let xs = sampler.path(n, &mut rng).into_iter().map(|u| (u / sampler.s_size, u % sampler.s_size)).collect();
    SequencePair { xs }
}

/// Monte-Carlo law of `Σ j` over `paths` independent stationary paths.
pub fn markov_density_sum(model: &MarkovModel, j: &[f64], n: usize, paths: usize, seed: u64) -> DensitySum {
    let sampler = ChainSampler::new(model);
    let mut v = map_trials(seed, paths, DEFAULT_CHUNK, |rng| sampler.path(n, rng).iter().map(|&u| j[u]).sum::<f64>());
    v.sort_by(f64::total_cmp);
    DensitySum::Samples(v)
}

// ---------------------------------------------------------------------------
// Files and random chains.

/// JSON form of a Markov model:
///
/// ```json
/// {"x_size": 2, "s_size": 1,
///  "xi": [[0.9, 0.1], [0.2, 0.8]],
///  "d": [[0, 1], [1, 0]]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovFile {
    pub x_size: usize,
    pub s_size: usize,
    pub xi: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl MarkovFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn into_model(self) -> Result<MarkovModel> {
        let dist = DistortionSpec::new(&self.d)?;
        MarkovModel::new(self.x_size, self.s_size, &self.xi, dist)
    }

    pub fn from_model(model: &MarkovModel) -> Self {
        MarkovFile { x_size: model.x_size, s_size: model.s_size, xi: model.xi_rows(), d: model.dist.to_rows() }
    }
}

/// A random chain with `x_size·s_size ≤ max_states` and every transition
/// positive (Dirichlet(1) rows), with distortions uniform on `[0, 1)`.
pub fn random_chain(seed: u64, max_states: usize) -> MarkovModel {
    let mut rng = chunk_rng(seed, 0);
    let max_states = max_states.max(2);
    let x_size = rng.random_range(2..=max_states);
    let s_size = rng.random_range(1..=max_states / x_size);
    let y_size = rng.random_range(2..=4);
    let k = x_size * s_size;
    let xi: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let row: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let t: f64 = row.iter().sum();
            row.into_iter().map(|v| v / t).collect()
        })
        .collect();
    let d: Vec<Vec<f64>> = (0..x_size).map(|_| (0..y_size).map(|_| rng.random::<f64>()).collect()).collect();
    MarkovModel::new(x_size, s_size, &xi, DistortionSpec::new(&d).expect("nonnegative")).expect("positive chain")
}
