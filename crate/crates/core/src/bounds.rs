//! Finite-blocklength bounds for discrete memoryless sources with side
//! information.
//!
//! * [`converse_lower`]: `ε ≥ sup_γ Pr[Σ j ≥ ln M + γ] - e^{-γ}`.
//! * [`simulate_random_code`]: Monte-Carlo estimate of the random-coding
//!   error `E[(1 - P_{Ȳⁿ|Sⁿ}(B_D(Xⁿ)|Sⁿ))^M]` with `Ȳ ~ P_{Y*|S}`.
//! * [`forward_bound`]: the three-term relaxation of the random-coding bound.
//! * [`second_order_rate`]: `R + √(V/n) Q⁻¹(ε)`.
//!
//! All codebook sizes are carried as `ln M`.
//!
//! Ball probabilities are computed exactly through the change of measure
//! from `P_{Y*|S}` to the optimal channel `W = P_{Y*|XS}`:
//!
//! `P_{Ȳⁿ|Sⁿ}(B_D(xⁿ)|sⁿ) = exp(-Σ j(xᵢ|sᵢ)) · E_W[1{Σ d ≤ nD} exp(-λ*(nD - Σ d))]`
//!
//! where the expectation is the exact lattice distribution of `Σ d(xᵢ, Yᵢ)`.
//! Under `W` the ball sits near the bulk of the distribution, so nothing
//! underflows even when the ball has probability `e^{-1000}`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crd::CrdSolution;
use crate::error::{Error, Result};
use crate::lattice::{natural_step, LatticePmf, DEFAULT_ATOM_CAP};
use crate::math::{chi2_pdf, chi2_sf, gaussian_q_inv, one_minus_p_pow_m};
use crate::quad::integrate_pieces;
use crate::mc::{map_trials, Estimate, DEFAULT_CHUNK};
use crate::source::{Instance, PairSampler};
use crate::tilted::TiltedField;

/// A blocklength, distortion level, target excess probability and codebook size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblQuery {
    pub n: usize,
    pub distortion: f64,
    pub eps: f64,
    /// `ln M`, nats.
    pub ln_m: f64,
}

impl FblQuery {
    pub fn new(n: usize, distortion: f64, eps: f64, ln_m: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("excess probability {eps} outside (0, 1)")));
        }
        if !(ln_m >= 0.0) {
            return Err(Error::InvalidParameter(format!("codebook size must be at least 1, got ln M = {ln_m}")));
        }
        Ok(FblQuery { n, distortion, eps, ln_m })
    }

    /// Query with `ln M = n · rate`.
    pub fn at_rate(n: usize, distortion: f64, eps: f64, rate: f64) -> Result<Self> {
        Self::new(n, distortion, eps, n as f64 * rate)
    }

    pub fn rate(&self) -> f64 {
        self.ln_m / self.n as f64
    }

    pub fn with_ln_m(&self, ln_m: f64) -> Self {
        FblQuery { ln_m, ..*self }
    }
}

/// Free parameters of the three-term bound, in log form where they scale
/// with `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardBoundParams {
    pub ln_gamma: f64,
    pub ln_beta: f64,
    pub delta: f64,
}

impl ForwardBoundParams {
    pub fn new(ln_gamma: f64, ln_beta: f64, delta: f64) -> Result<Self> {
        if !ln_gamma.is_finite() || !ln_beta.is_finite() || !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "forward-bound parameters must be positive and finite: ln γ = {ln_gamma}, ln β = {ln_beta}, δ = {delta}"
            )));
        }
        Ok(ForwardBoundParams { ln_gamma, ln_beta, delta })
    }

    /// `δ = D/100`, `γ = M/√n`, `β = √n/C`.
    pub fn defaults(query: &FblQuery, c: f64) -> Result<Self> {
        let half_ln_n = 0.5 * (query.n as f64).ln();
        Self::new(query.ln_m - half_ln_n, half_ln_n - c.ln(), query.distortion / 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// Bound on `ε`, clamped to `[0, 1]`.
    pub value: f64,
    /// Summands of the pre-clamp value.
    pub terms: Vec<BoundTerm>,
    pub mc_stderr: Option<f64>,
    /// Worst-case effect of lattice rounding on the summed statistic.
    pub quantization: Option<f64>,
    pub trials: usize,
    /// Maximizing `γ` of the converse.
    pub gamma: Option<f64>,
}

impl BoundResult {
    fn from_terms(terms: Vec<(&str, f64)>) -> Self {
        let raw: f64 = terms.iter().map(|t| t.1).sum();
        BoundResult {
            value: raw.clamp(0.0, 1.0),
            terms: terms.into_iter().map(|(n, v)| BoundTerm { name: n.to_string(), value: v }).collect(),
            mc_stderr: None,
            quantization: None,
            trials: 0,
            gamma: None,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// `R + √(V/n) Q⁻¹(ε)`.
pub fn second_order_rate(n: usize, eps: f64, rate: f64, v: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    Ok(rate + (v.max(0.0) / n as f64).sqrt() * gaussian_q_inv(eps)?)
}

// ---------------------------------------------------------------------------
// Distribution of Σ j(Xᵢ,D|Sᵢ).

/// Controls for the law of `Σ j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumOptions {
    /// Lattice resolution, nats.
    pub step: f64,
    pub atom_cap: usize,
    /// Monte-Carlo sample size when the lattice overflows.
    pub mc_trials: usize,
    pub seed: u64,
}

impl Default for SumOptions {
    fn default() -> Self {
        SumOptions { step: 1e-6, atom_cap: DEFAULT_ATOM_CAP, mc_trials: 200_000, seed: 0 }
    }
}

/// Law of `Σ_{i≤n} j(Xᵢ,D|Sᵢ)` under the i.i.d. source.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySum {
    Lattice { pmf: LatticePmf, quantization: f64 },
    Samples(Vec<f64>),
    /// `offset + scale·χ²_dof`, exact.
    ChiSquare { dof: u64, offset: f64, scale: f64 },
}

impl DensitySum {
    pub fn build(field: &TiltedField, inst: &Instance, n: usize, opts: &SumOptions) -> Result<Self> {
        let letter = LatticePmf::from_values(&field.letter_law(inst), opts.step)?;
        match letter.power(n as u64, opts.atom_cap) {
            Ok(pmf) => Ok(DensitySum::Lattice { pmf, quantization: 0.5 * n as f64 * opts.step }),
            Err(Error::LatticeOverflow(_)) => Ok(Self::sampled(field, inst, n, opts.mc_trials, opts.seed)),
            Err(e) => Err(e),
        }
    }

    /// Monte-Carlo law of the sum.
    pub fn sampled(field: &TiltedField, inst: &Instance, n: usize, trials: usize, seed: u64) -> Self {
        let sampler = PairSampler::new(&inst.source);
        let mut v = map_trials(seed, trials, DEFAULT_CHUNK, |rng| {
            (0..n)
                .map(|_| {
                    let (x, s) = sampler.sample(rng);
                    field.j(x, s)
                })
                .sum::<f64>()
        });
        v.sort_by(f64::total_cmp);
        DensitySum::Samples(v)
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, DensitySum::Samples(_))
    }

    pub fn quantization(&self) -> Option<f64> {
        match self {
            DensitySum::Lattice { quantization, .. } => Some(*quantization),
            DensitySum::ChiSquare { .. } => Some(0.0),
            DensitySum::Samples(_) => None,
        }
    }

    pub fn tail_ge(&self, t: f64) -> f64 {
        match self {
            DensitySum::Lattice { pmf, .. } => pmf.tail_ge(t),
            DensitySum::ChiSquare { dof, offset, scale } => chi2_sf(*dof, (t - offset) / scale),
            DensitySum::Samples(v) => {
                let i = v.partition_point(|&x| x < t);
                (v.len() - i) as f64 / v.len() as f64
            }
        }
    }

    pub fn tail_gt(&self, t: f64) -> f64 {
        match self {
            DensitySum::Lattice { pmf, .. } => pmf.tail_gt(t),
            DensitySum::ChiSquare { .. } => self.tail_ge(t),
            DensitySum::Samples(v) => {
                let i = v.partition_point(|&x| x <= t);
                (v.len() - i) as f64 / v.len() as f64
            }
        }
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        match self {
            DensitySum::Lattice { pmf, .. } => pmf.expect(f),
            DensitySum::ChiSquare { dof, offset, scale } => {
                let k = *dof as f64;
                let hi = k + 40.0 * (2.0 * k).sqrt() + 100.0;
                let g = |u: f64| f(offset + scale * u) * chi2_pdf(*dof, u);
                let breaks: Vec<f64> = (0..=16).map(|i| hi * i as f64 / 16.0).collect();
                integrate_pieces(g, &breaks, 1e-12, 1e-10).map(|r| r.0).unwrap_or(f64::NAN)
            }
            DensitySum::Samples(v) => v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64,
        }
    }

    /// Standard error of `Pr[sum ≥ t]` (zero for the exact lattice law).
    pub fn tail_stderr(&self, t: f64) -> f64 {
        match self {
            DensitySum::Lattice { .. } | DensitySum::ChiSquare { .. } => 0.0,
            DensitySum::Samples(v) => {
                let p = self.tail_ge(t);
                (p * (1.0 - p) / v.len() as f64).sqrt()
            }
        }
    }
}

/// `γ` values searched by the converse: `ln √n` and `2^k √(nV)`, `k = -4..=10`.
pub fn converse_gamma_grid(n: usize, v: f64) -> Vec<f64> {
    let mut g = vec![0.5 * (n as f64).ln()];
    let scale = (n as f64 * v).sqrt();
    if scale > 0.0 {
        g.extend((-4..=10).map(|k| 2f64.powi(k) * scale));
    }
    g.retain(|&x| x > 0.0);
    g
}

/// `Pr[Σ j ≥ ln M + γ] - e^{-γ}`, not clamped.
pub fn converse_lower_at(query: &FblQuery, sum: &DensitySum, gamma: f64) -> f64 {
    sum.tail_ge(query.ln_m + gamma) - (-gamma).exp()
}

/// Supremum of [`converse_lower_at`] over [`converse_gamma_grid`], clamped at 0.
pub fn converse_lower_with(query: &FblQuery, sum: &DensitySum, v: f64) -> BoundResult {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for g in converse_gamma_grid(query.n, v) {
        let val = converse_lower_at(query, sum, g);
        if val > best.0 {
            best = (val, g);
        }
    }
    let gamma = best.1;
    let tail = sum.tail_ge(query.ln_m + gamma);
    let mut r = BoundResult::from_terms(vec![("tail", tail), ("penalty", -(-gamma).exp())]);
    r.gamma = Some(gamma);
    r.quantization = sum.quantization();
    if let DensitySum::Samples(v) = sum {
        r.mc_stderr = Some(sum.tail_stderr(query.ln_m + gamma));
        r.trials = v.len();
    }
    r
}

pub fn converse_lower(query: &FblQuery, field: &TiltedField, inst: &Instance, opts: &SumOptions) -> Result<BoundResult> {
    let sum = DensitySum::build(field, inst, query.n, opts)?;
    Ok(converse_lower_with(query, &sum, field.variance))
}

/// Smallest `ln M` for which the converse no longer excludes `ε`: every code
/// with excess probability `ε` has `ln M` at least this large.
pub fn converse_ln_m(n: usize, eps: f64, sum: &DensitySum, v: f64) -> f64 {
    let f = |ln_m: f64| {
        let q = FblQuery { n, distortion: 0.0, eps, ln_m };
        converse_lower_with(&q, sum, v).value
    };
    let mut lo = 0.0;
    if f(lo) <= eps {
        return 0.0;
    }
    let mut hi = 1.0f64.max(sum.expect(|x| x.abs()) * 2.0);
    while f(hi) > eps {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// Distortion balls.

/// Per-trial quantities of a random source sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    /// `Σ j(xᵢ,D|sᵢ)`.
    pub sum_j: f64,
    /// `ln P_{Ȳⁿ|Sⁿ}(B_D(xⁿ)|sⁿ)`.
    pub ln_ball: f64,
    /// `Pr_W[D - δ ≤ d(xⁿ, Yⁿ) ≤ D]`.
    pub window: f64,
}

/// Lattice controls for the distortion sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallOptions {
    /// Lattice step for distortion values; chosen from the distortion matrix
    /// when `None`.
    pub step: Option<f64>,
    pub chunk: usize,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions { step: None, chunk: DEFAULT_CHUNK }
    }
}

/// Exact ball and window probabilities for sampled source sequences.
pub struct BallModel<'a> {
    inst: &'a Instance,
    field: &'a TiltedField,
    n: usize,
    distortion: f64,
    delta: f64,
    step: f64,
    limit: i64,
    /// Law of `d(x, Y)` with `Y ~ W(·|x,s)`, per `(x, s)`.
    letters: Vec<Option<LatticePmf>>,
    lambda: f64,
}

impl<'a> BallModel<'a> {
    pub fn new(
        solution: &CrdSolution,
        field: &'a TiltedField,
        inst: &'a Instance,
        n: usize,
        delta: f64,
        opts: &BallOptions,
    ) -> Result<Self> {
        let lambda = field.slope;
        if lambda.is_infinite() {
            return Err(Error::Domain("ball probabilities need a finite slope (D above the floor)".into()));
        }
        let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
        let distortion = field.distortion;
        let values: Vec<f64> = (0..nx).flat_map(|x| inst.dist.row(x).to_vec()).collect();
        let step = opts.step.unwrap_or_else(|| {
            let coarse = (n as f64 * distortion / 2e5).max(inst.dist.d_max() * 1e-4);
            natural_step(&values, coarse)
        });
        let limit = (n as f64 * distortion / step + 1e-9).floor() as i64;
        let mut letters = Vec::with_capacity(nx * ns);
        for x in 0..nx {
            for s in 0..ns {
                if inst.source.p(x, s) <= 0.0 {
                    letters.push(None);
                    continue;
                }
                let j = field.j(x, s);
                let mut law = Vec::with_capacity(ny);
                for y in 0..ny {
                    let q = solution.induced(y, s);
                    if q > 0.0 {
                        let d = inst.dist.d(x, y);
                        law.push((d, q * (lambda * (distortion - d) + j).exp()));
                    }
                }
                let total: f64 = law.iter().map(|a| a.1).sum();
                law.iter_mut().for_each(|a| a.1 /= total);
                letters.push(Some(LatticePmf::from_values(&law, step)?));
            }
        }
        Ok(BallModel { inst, field, n, distortion, delta, step, limit, letters, lambda })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Largest rounding error of `d(xⁿ, yⁿ)` caused by the lattice.
    pub fn quantization(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.inst.x_size() {
            for &d in self.inst.dist.row(x) {
                worst = worst.max((d - (d / self.step).round() * self.step).abs());
            }
        }
        worst
    }

    /// Ball statistics for a type given by `(x, s)` occurrence counts.
    pub fn evaluate(&self, counts: &[usize], cache: &mut HashMap<(usize, usize), LatticePmf>) -> Result<BallSample> {
        let ns = self.inst.s_size();
        let mut sum_j = 0.0;
        let mut law = LatticePmf::delta(self.step);
        for (g, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            sum_j += c as f64 * self.field.j(g / ns, g % ns);
            let letter = self.letters[g]
                .as_ref()
                .ok_or_else(|| Error::SupportMismatch(format!("sampled a null letter {g}")))?;
            let part = match cache.get(&(g, c)) {
                Some(p) => p.clone(),
                None => {
                    let p = letter.power_upto(c as u64, usize::MAX, Some(self.limit))?;
                    cache.insert((g, c), p.clone());
                    p
                }
            };
            law = law.convolve_upto(&part, usize::MAX, Some(self.limit))?;
        }
        let top = self.n as f64 * self.distortion;
        let ln_w = law.ln_tilted_lower(top, self.lambda);
        let window = law.window(self.n as f64 * (self.distortion - self.delta), top);
        Ok(BallSample { sum_j, ln_ball: ln_w - sum_j, window })
    }

    /// Draws `trials` i.i.d. source sequences and evaluates each.
    pub fn sample(&self, trials: usize, seed: u64, chunk: usize) -> Result<Vec<BallSample>> {
        let sampler = PairSampler::new(&self.inst.source);
        let ns = self.inst.s_size();
        let groups = self.inst.x_size() * ns;
        let chunk = chunk.max(1);
        let chunks = trials.div_ceil(chunk);
        // One cache per chunk keeps chunks independent of scheduling.
        let per_chunk: Vec<Result<Vec<BallSample>>> = {
            use rayon::prelude::*;
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = crate::mc::chunk_rng(seed, c as u64);
                    let mut cache = HashMap::new();
                    let count = chunk.min(trials - c * chunk);
                    (0..count)
                        .map(|_| {
                            let mut counts = vec![0usize; groups];
                            for _ in 0..self.n {
                                let (x, s) = sampler.sample(&mut rng);
                                counts[x * ns + s] += 1;
                            }
                            self.evaluate(&counts, &mut cache)
                        })
                        .collect()
                })
                .collect()
        };
        let mut out = Vec::with_capacity(trials);
        for c in per_chunk {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// `E[(1 - p)^M]` over ball samples.
pub fn random_code_eps(samples: &[BallSample], ln_m: f64) -> Estimate {
    let v: Vec<f64> = samples.iter().map(|b| one_minus_p_pow_m(b.ln_ball, ln_m)).collect();
    Estimate::from_samples(&v)
}

/// Smallest `ln M` at which the simulated random code reaches `ε`.
pub fn achievability_ln_m(eps: f64, samples: &[BallSample]) -> f64 {
    let f = |ln_m: f64| random_code_eps(samples, ln_m).mean;
    let mut lo = 0.0;
    if f(lo) <= eps {
        return 0.0;
    }
    let mut hi: f64 = samples.iter().map(|b| -b.ln_ball).filter(|v| v.is_finite()).fold(1.0, f64::max);
    while f(hi) > eps {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    Ok(())
}

/// Monte-Carlo estimate of the random-coding error with codewords drawn
/// i.i.d. from `P_{Y*|S}`.
pub fn simulate_random_code(
    query: &FblQuery,
    solution: &CrdSolution,
    field: &TiltedField,
    inst: &Instance,
    trials: usize,
    seed: u64,
) -> Result<BoundResult> {
    check_trials(trials)?;
    let model = BallModel::new(solution, field, inst, query.n, query.distortion / 100.0, &BallOptions::default())?;
    let samples = model.sample(trials, seed, DEFAULT_CHUNK)?;
    let est = random_code_eps(&samples, query.ln_m);
    let mut r = BoundResult::from_terms(vec![("random_code", est.mean)]);
    r.mc_stderr = Some(est.stderr);
    r.trials = trials;
    r.quantization = Some(model.quantization());
    Ok(r)
}

/// `C = √n · min` window probability over a pilot sample; positive windows
/// only (a zero window contributes the full `1` to the second term for any `β`).
pub fn calibrate_c(samples: &[BallSample], n: usize) -> f64 {
    let m = samples.iter().map(|b| b.window).filter(|&w| w > 0.0).fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        (n as f64).sqrt() * m
    } else {
        1.0
    }
}

/// Three-term relaxation of the random-coding bound:
///
/// * `T1 = Pr[Σ j > ln γ - ln β - nλ*δ]`
/// * `T2 = E|1 - β Pr[D - δ ≤ d(Xⁿ,Yⁿ*) ≤ D | Xⁿ]|⁺`
/// * `T3 = e^{-M/γ} E[min(1, γ e^{-Σ j})]`
///
/// `T1` and `T3` come from the exact law of `Σ j` when it fits on the
/// lattice, `T2` from the same source samples as [`simulate_random_code`].
pub fn forward_bound_with(
    query: &FblQuery,
    params: &ForwardBoundParams,
    lambda: f64,
    sum: &DensitySum,
    samples: &[BallSample],
) -> BoundResult {
    let n = query.n as f64;
    let threshold = params.ln_gamma - params.ln_beta - n * lambda * params.delta;
    let t1 = sum.tail_gt(threshold);
    let beta = params.ln_beta.exp();
    let t2v: Vec<f64> = samples.iter().map(|b| (1.0 - beta * b.window).max(0.0)).collect();
    let t2 = Estimate::from_samples(&t2v);
    let ln_gamma = params.ln_gamma;
    let ratio = (query.ln_m - ln_gamma).exp();
    let t3 = (-ratio).exp() * sum.expect(|j| (ln_gamma - j).min(0.0).exp());
    let mut r = BoundResult::from_terms(vec![("t1", t1), ("t2", t2.mean), ("t3", t3)]);
    let t1_err = if sum.is_exact() { 0.0 } else { sum.tail_stderr(threshold) };
    r.mc_stderr = Some((t2.stderr.powi(2) + t1_err.powi(2)).sqrt());
    r.trials = samples.len();
    r.quantization = sum.quantization();
    r
}

#[allow(clippy::too_many_arguments)]
pub fn forward_bound(
    query: &FblQuery,
    params: &ForwardBoundParams,
    solution: &CrdSolution,
    field: &TiltedField,
    inst: &Instance,
    trials: usize,
    seed: u64,
) -> Result<BoundResult> {
    check_trials(trials)?;
    let model = BallModel::new(solution, field, inst, query.n, params.delta, &BallOptions::default())?;
    let samples = model.sample(trials, seed, DEFAULT_CHUNK)?;
    let sum = DensitySum::build(field, inst, query.n, &SumOptions { seed, ..Default::default() })?;
    Ok(forward_bound_with(query, params, field.slope, &sum, &samples))
}

/// Draws one `(x, s)` sequence and returns its type (occurrence counts).
pub fn sample_type<R: Rng + ?Sized>(sampler: &PairSampler, n: usize, groups: usize, s_size: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0usize; groups];
    for _ in 0..n {
        let (x, s) = sampler.sample(rng);
        counts[x * s_size + s] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crd::{solve_crd, SolverOptions};
    use crate::source::binary_example;
    use crate::tilted::tilted_density;

    fn binary() -> (Instance, CrdSolution, TiltedField) {
        let inst = binary_example(0.5, 0.2);
        let sol = solve_crd(&inst, 0.1, &SolverOptions::default()).unwrap();
        let f = tilted_density(&sol, &inst).unwrap();
        (inst, sol, f)
    }

    #[test]
    fn second_order_values() {
        let r = crate::math::binary_entropy(0.2) - crate::math::binary_entropy(0.1);
        let v = 0.16 * 4f64.ln().powi(2);
        assert_eq!(second_order_rate(1000, 0.5, r, v).unwrap(), r);
        assert!((second_order_rate(1000, 0.1, r, v).unwrap() - 0.1977919576).abs() < 1e-9);
        let a = second_order_rate(50, 0.2, r, v).unwrap();
        let b = second_order_rate(50, 0.8, r, v).unwrap();
        assert!((a + b - 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn converse_single_letter() {
        let (inst, _, f) = binary();
        let q = FblQuery::new(1, 0.1, 0.1, 0.0).unwrap();
        let sum = DensitySum::build(&f, &inst, 1, &SumOptions::default()).unwrap();
        let g = 2f64.ln();
        let direct: f64 = f.letter_law(&inst).iter().filter(|(j, _)| *j >= g).map(|a| a.1).sum::<f64>() - 0.5;
        assert!((converse_lower_at(&q, &sum, g) - direct).abs() < 1e-12);
    }

    #[test]
    fn converse_vacuous_for_huge_m() {
        let (inst, _, f) = binary();
        let jmax = f.table.iter().cloned().fold(f64::MIN, f64::max);
        let q = FblQuery::new(20, 0.1, 0.1, 20.0 * jmax + 1.0).unwrap();
        let r = converse_lower(&q, &f, &inst, &SumOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn full_ball_gives_zero_error() {
        let inst = binary_example(0.5, 0.2);
        let sol = solve_crd(&inst, 1.0, &SolverOptions::default()).unwrap();
        let f = tilted_density(&sol, &inst).unwrap();
        let q = FblQuery::new(30, 1.0, 0.1, 0.0).unwrap();
        let r = simulate_random_code(&q, &sol, &f, &inst, 50, 3).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn forward_dominates_random_code() {
        let (inst, sol, f) = binary();
        let n = 100;
        let q = FblQuery::at_rate(n, 0.1, 0.1, 0.3).unwrap();
        let model = BallModel::new(&sol, &f, &inst, n, 0.001, &BallOptions::default()).unwrap();
        let samples = model.sample(400, 11, DEFAULT_CHUNK).unwrap();
        let sum = DensitySum::build(&f, &inst, n, &SumOptions::default()).unwrap();
        let c = calibrate_c(&samples, n);
        let p = ForwardBoundParams::defaults(&q, c).unwrap();
        let fb = forward_bound_with(&q, &p, f.slope, &sum, &samples);
        let rc = random_code_eps(&samples, q.ln_m);
        assert!(fb.value >= rc.mean - 3.0 * rc.stderr);
    }
}
