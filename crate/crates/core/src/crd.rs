//! Conditional rate-distortion function `R(X;D|S)`.
//!
//! The minimisation of `I(X;Y|S)` subject to `E d(X,Y) ≤ D` is solved by
//! Blahut-Arimoto alternating minimisation of the Lagrangian
//! `I(X;Y|S) + λ E d(X,Y)` at a fixed slope `λ`, wrapped in a bisection on
//! `λ` that meets the distortion constraint with equality.
//!
//! Two routes are provided and cross-checked by [`solve_crd`]:
//!
//! * [`solve_crd_direct`] iterates on the joint test channel `P_{Y|XS}` with a
//!   single multiplier on the joint constraint.
//! * [`solve_crd_decomposed`] builds one rate-distortion curve per
//!   side-information symbol and splits the distortion budget between them by
//!   equal-slope matching ([`allocate_distortion`]).
//!
//! Sign convention: `slope` is the nonnegative magnitude `λ* = -dR/dD`; the
//! tilted density uses it as `exp{λ*D - λ*d(x,y)}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{xlogy_ratio, Nats};
use crate::mc::chunk_rng;
use crate::source::{validate, DistortionSpec, Instance, JointSource};

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target duality gap on the rate, in nats.
    pub tol: f64,
    /// Iteration cap for a single fixed-slope alternating minimisation.
    pub max_iter: usize,
    /// Random (Dirichlet) initial output laws instead of uniform ones.
    pub init_seed: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 2_000_000, init_seed: None }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Direct,
    Decomposed,
    ZeroRate,
}

/// Solution of the conditional rate-distortion problem at one distortion level.
#[derive(Debug, Clone, PartialEq)]
pub struct CrdSolution {
    pub x_size: usize,
    pub s_size: usize,
    pub y_size: usize,
    /// Distortion level `D` the problem was solved at.
    pub target: f64,
    pub rate: Nats,
    /// `λ* = -dR/dD ≥ 0`; `+∞` at the feasibility floor.
    pub slope: f64,
    /// `P_{Y*|XS}` laid out as `[(x * s_size + s) * y_size + y]`.
    pub channel: Vec<f64>,
    /// `P_{Y*|S}` laid out as `[s * y_size + y]`.
    pub induced: Vec<f64>,
    pub distortion_achieved: f64,
    /// Per-state distortion budgets `d_s` with `Σ P_S(s) d_s = D`.
    pub allocation: Vec<f64>,
    /// Per-state rates `R(P_{X|S}(·|s), d_s)`.
    pub per_state_rate: Vec<f64>,
    /// Final duality gap of the alternating minimisation.
    pub gap: f64,
    pub method: Method,
    /// `|R_direct - R_decomposed|` when both routes were run.
    pub cross_check: Option<f64>,
}

impl CrdSolution {
    #[inline]
    pub fn channel(&self, y: usize, x: usize, s: usize) -> f64 {
        self.channel[(x * self.s_size + s) * self.y_size + y]
    }

    #[inline]
    pub fn induced(&self, y: usize, s: usize) -> f64 {
        self.induced[s * self.y_size + y]
    }

    pub fn induced_row(&self, s: usize) -> &[f64] {
        &self.induced[s * self.y_size..(s + 1) * self.y_size]
    }

    pub fn is_zero_rate(&self) -> bool {
        self.method == Method::ZeroRate
    }
}

/// Point on a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdCurvePoint {
    pub distortion: f64,
    pub rate: f64,
    pub slope: f64,
    pub dispersion: f64,
}

// ---------------------------------------------------------------------------
// Fixed-slope alternating minimisation.

/// `exp(-λ (d(x,y) - min_y d(x,y)))`; at `λ = ∞` the indicator of the
/// per-letter minimisers.
fn kernel(dist: &DistortionSpec, lambda: f64) -> Vec<f64> {
    let (nx, ny) = (dist.x_size(), dist.y_size());
    let mut k = vec![0.0; nx * ny];
    for x in 0..nx {
        let dmin = dist.d_min_x(x);
        for y in 0..ny {
            let excess = dist.d(x, y) - dmin;
            k[x * ny + y] = if lambda.is_infinite() {
                if excess <= 1e-12 * dist.d_max().max(1.0) {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-lambda * excess).exp()
            };
        }
    }
    k
}

const PRUNE_BELOW: f64 = 1e-14;
const REVIVE_AT: f64 = 1e-8;
/// Outputs above this mass must be at a fixed point before stopping.
const SUPPORT_MASS: f64 = 1e-9;
const STATIONARITY: f64 = 1e-11;

/// One Blahut-Arimoto sweep for a single conditional source. Updates `q` in
/// place and returns the gap `ln max_y c(y) - Σ_y q(y) c(y) ln c(y)` measured at
/// the incoming `q`, where `c(y) = Σ_x p(x) k(x,y) / Σ_y' q(y') k(x,y')`,
/// together with `max |c(y) - 1|` over outputs of non-negligible mass.
fn ba_sweep(px: &[f64], kern: &[f64], ny: usize, q: &mut [f64], c: &mut [f64]) -> (f64, f64) {
    loop {
        c.iter_mut().for_each(|v| *v = 0.0);
        let mut degenerate = false;
        for (x, &p) in px.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let row = &kern[x * ny..(x + 1) * ny];
            let z: f64 = row.iter().zip(q.iter()).map(|(k, qq)| k * qq).sum();
            if !(z > 0.0) {
                degenerate = true;
                break;
            }
            let w = p / z;
            for (cy, k) in c.iter_mut().zip(row) {
                *cy += w * k;
            }
        }
        if !degenerate {
            break;
        }
        // Some source letter lost all its reachable outputs: reseed them.
        let n = q.len() as f64;
        q.iter_mut().for_each(|v| *v = (*v + 1e-6 / n) / (1.0 + 1e-6));
    }
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    let avg: f64 = q
        .iter()
        .zip(c.iter())
        .map(|(&qq, &cc)| if qq > 0.0 && cc > 0.0 { qq * cc * cc.ln() } else { 0.0 })
        .sum();
    let gap = cmax.ln() - avg;
    let drift = q
        .iter()
        .zip(c.iter())
        .filter(|(&qq, _)| qq > SUPPORT_MASS)
        .map(|(_, &cc)| (cc - 1.0).abs())
        .fold(0.0, f64::max);
    let mut revived = false;
    for (qq, &cc) in q.iter_mut().zip(c.iter()) {
        if *qq > 0.0 {
            *qq *= cc;
            if *qq < PRUNE_BELOW && cc < 1.0 {
                *qq = 0.0;
            }
        } else if cc > 1.0 + 1e-13 {
            *qq = REVIVE_AT;
            revived = true;
        }
    }
    let total: f64 = q.iter().sum();
    if revived || (total - 1.0).abs() > 1e-14 {
        q.iter_mut().for_each(|v| *v /= total);
    }
    (gap.max(0.0), drift)
}

const POLISH_EVERY: usize = 200;

/// `-Σ_x p(x) ln Σ_y q(y) k(x,y)`, the fixed-slope objective in `q`.
fn dual_objective(px: &[f64], kern: &[f64], ny: usize, q: &[f64]) -> f64 {
    px.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x, &p)| {
            let z: f64 = kern[x * ny..(x + 1) * ny].iter().zip(q).map(|(k, qq)| k * qq).sum();
            -p * z.ln()
        })
        .sum()
}

/// Active-set Newton iterations on the fixed-slope objective over the
/// simplex. Used when the multiplicative sweeps crawl (an output whose
/// optimal mass is tiny but positive grows only at rate `c(y) ≈ 1`).
fn newton_polish(px: &[f64], kern: &[f64], ny: usize, q: &mut [f64]) {
    use nalgebra::{DMatrix, DVector};
    let live: Vec<usize> = (0..px.len()).filter(|&x| px[x] > 0.0).collect();
    for _ in 0..60 {
        let z: Vec<f64> = live
            .iter()
            .map(|&x| kern[x * ny..(x + 1) * ny].iter().zip(q.iter()).map(|(k, qq)| k * qq).sum())
            .collect();
        if z.iter().any(|&v| !(v > 0.0)) {
            return;
        }
        let mut c = vec![0.0; ny];
        for (i, &x) in live.iter().enumerate() {
            for y in 0..ny {
                c[y] += px[x] * kern[x * ny + y] / z[i];
            }
        }
        let mut active: Vec<usize> = (0..ny).filter(|&y| q[y] > 0.0 || c[y] > 1.0).collect();
        let done = (0..ny).all(|y| if q[y] > 0.0 { (c[y] - 1.0).abs() <= 1e-15 } else { c[y] <= 1.0 });
        if done {
            return;
        }
        let step = loop {
            let m = active.len();
            let mut h = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for (a, &ya) in active.iter().enumerate() {
                for (b, &yb) in active.iter().enumerate() {
                    h[(a, b)] = live
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| px[x] * kern[x * ny + ya] * kern[x * ny + yb] / (z[i] * z[i]))
                        .sum();
                }
                h[(a, a)] += 1e-13;
                h[(a, m)] = 1.0;
                h[(m, a)] = 1.0;
                rhs[a] = c[ya];
            }
            let Some(sol) = h.lu().solve(&rhs) else { return };
            let blocked: Vec<usize> =
                (0..m).filter(|&a| q[active[a]] <= 0.0 && sol[a] < 0.0).map(|a| active[a]).collect();
            if blocked.is_empty() {
                let mut full = vec![0.0; ny];
                for (a, &y) in active.iter().enumerate() {
                    full[y] = sol[a];
                }
                break full;
            }
            active.retain(|y| !blocked.contains(y));
            if active.is_empty() {
                return;
            }
        };
        let mut t_max: f64 = 1.0;
        for y in 0..ny {
            if step[y] < 0.0 {
                t_max = t_max.min(q[y] / -step[y]);
            }
        }
        let f0 = dual_objective(px, kern, ny, q);
        let slope: f64 = -(0..ny).map(|y| c[y] * step[y]).sum::<f64>();
        let mut t = t_max;
        let mut trial = vec![0.0; ny];
        let mut accepted = false;
        for _ in 0..40 {
            for y in 0..ny {
                trial[y] = (q[y] + t * step[y]).max(0.0);
            }
            let tot: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= tot);
            let f1 = dual_objective(px, kern, ny, &trial);
            if f1 <= f0 + 1e-4 * t * slope.min(0.0) + 1e-15 * f0.abs() {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return;
        }
        q.copy_from_slice(&trial);
    }
}

/// Channel `W(y|x) = q(y) k(x,y) / Σ q k`, the induced output law, the
/// expected distortion and the mutual information for one conditional source.
struct StateOutcome {
    channel: Vec<f64>,
    induced: Vec<f64>,
    distortion: f64,
    rate: f64,
}

fn state_outcome(px: &[f64], dist: &DistortionSpec, kern: &[f64], q: &[f64]) -> StateOutcome {
    let (nx, ny) = (dist.x_size(), dist.y_size());
    let mut channel = vec![0.0; nx * ny];
    let mut induced = vec![0.0; ny];
    for x in 0..nx {
        let row = &kern[x * ny..(x + 1) * ny];
        let z: f64 = row.iter().zip(q).map(|(k, qq)| k * qq).sum();
        if z > 0.0 {
            for y in 0..ny {
                channel[x * ny + y] = q[y] * row[y] / z;
            }
        } else {
            // Unreachable for letters with positive mass; keep rows stochastic.
            let best = (0..ny)
                .min_by(|&a, &b| dist.d(x, a).total_cmp(&dist.d(x, b)))
                .unwrap_or(0);
            channel[x * ny + best] = 1.0;
        }
        for y in 0..ny {
            induced[y] += px[x] * channel[x * ny + y];
        }
    }
    let mut distortion = 0.0;
    let mut rate = 0.0;
    for x in 0..nx {
        if px[x] <= 0.0 {
            continue;
        }
        for y in 0..ny {
            let w = channel[x * ny + y];
            distortion += px[x] * w * dist.d(x, y);
            rate += px[x] * xlogy_ratio(w, induced[y]);
        }
    }
    StateOutcome { channel, induced, distortion, rate: rate.max(0.0) }
}

/// The live (positive-mass) states of an instance with their conditionals.
struct States {
    idx: Vec<usize>,
    weight: Vec<f64>,
    px: Vec<Vec<f64>>,
}

impl States {
    fn of(inst: &Instance) -> Self {
        let mut idx = Vec::new();
        let mut weight = Vec::new();
        let mut px = Vec::new();
        for s in 0..inst.s_size() {
            if let Some(c) = inst.source.conditional(s) {
                idx.push(s);
                weight.push(inst.source.p_s()[s]);
                px.push(c);
            }
        }
        States { idx, weight, px }
    }
}

fn initial_law(ny: usize, opts: &SolverOptions, stream: u64) -> Vec<f64> {
    match opts.init_seed {
        None => vec![1.0 / ny as f64; ny],
        Some(seed) => {
            let mut rng = chunk_rng(seed, stream);
            let mut v: Vec<f64> = (0..ny).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
            let t: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= t);
            v
        }
    }
}

/// Joint fixed-slope evaluation over all live states.
struct SlopePoint {
    lambda: f64,
    qs: Vec<Vec<f64>>,
    outcomes: Vec<StateOutcome>,
    distortion: f64,
    rate: f64,
    gap: f64,
}

/// Alternating minimisation at slope `lambda` on the joint channel. All states
/// are swept together and stopped on the `P_S`-weighted duality gap.
fn joint_at_slope(
    states: &States,
    dist: &DistortionSpec,
    lambda: f64,
    warm: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<SlopePoint> {
    let ny = dist.y_size();
    let kern = kernel(dist, lambda);
    let mut qs: Vec<Vec<f64>> = warm
        .iter()
        .map(|q| {
            // Keep every output reachable so that the warm start can move.
            let mut v: Vec<f64> = q.iter().map(|&x| x + 1e-12).collect();
            let t: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= t);
            v
        })
        .collect();
    let mut c = vec![0.0; ny];
    let mut gap = f64::INFINITY;
    let mut drift = f64::INFINITY;
    let mut iter = 0;
    while iter < opts.max_iter {
        gap = 0.0;
        drift = 0.0;
        for (k, q) in qs.iter_mut().enumerate() {
            let (g, dr) = ba_sweep(&states.px[k], &kern, ny, q, &mut c);
            gap += states.weight[k] * g;
            drift = drift.max(dr);
        }
        iter += 1;
        if gap <= opts.tol / 10.0 && drift <= STATIONARITY {
            break;
        }
        if iter % POLISH_EVERY == 0 {
            for (k, q) in qs.iter_mut().enumerate() {
                newton_polish(&states.px[k], &kern, ny, q);
            }
        }
    }
    if gap > opts.tol / 10.0 || drift > STATIONARITY {
        return Err(Error::NonConvergence { iterations: iter, gap });
    }
    let outcomes: Vec<StateOutcome> = qs
        .iter()
        .zip(&states.px)
        .map(|(q, px)| state_outcome(px, dist, &kern, q))
        .collect();
    let distortion = outcomes.iter().zip(&states.weight).map(|(o, w)| w * o.distortion).sum();
    let rate = outcomes.iter().zip(&states.weight).map(|(o, w)| w * o.rate).sum();
    Ok(SlopePoint { lambda, qs, outcomes, distortion, rate, gap })
}

/// Mixes two slope points so the expected distortion is exactly `target`
/// (time sharing across a jump of the distortion-vs-slope map).
fn mix_points(lo: &SlopePoint, hi: &SlopePoint, target: f64, states: &States, dist: &DistortionSpec) -> SlopePoint {
    let theta = ((target - hi.distortion) / (lo.distortion - hi.distortion)).clamp(0.0, 1.0);
    let (nx, ny) = (dist.x_size(), dist.y_size());
    let mut outcomes = Vec::with_capacity(lo.outcomes.len());
    for (k, (a, b)) in lo.outcomes.iter().zip(&hi.outcomes).enumerate() {
        let channel: Vec<f64> = a.channel.iter().zip(&b.channel).map(|(u, v)| theta * u + (1.0 - theta) * v).collect();
        let px = &states.px[k];
        let mut induced = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                induced[y] += px[x] * channel[x * ny + y];
            }
        }
        let mut distortion = 0.0;
        let mut rate = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                let w = channel[x * ny + y];
                distortion += px[x] * w * dist.d(x, y);
                rate += px[x] * xlogy_ratio(w, induced[y]);
            }
        }
        outcomes.push(StateOutcome { channel, induced, distortion, rate });
    }
    let distortion = outcomes.iter().zip(&states.weight).map(|(o, w)| w * o.distortion).sum();
    let rate = outcomes.iter().zip(&states.weight).map(|(o, w)| w * o.rate).sum();
    let qs = outcomes.iter().map(|o| o.induced.clone()).collect();
    SlopePoint { lambda: hi.lambda, qs, outcomes, distortion, rate, gap: lo.gap.max(hi.gap) }
}

/// Bisection on the slope so that the joint distortion equals `target`.
/// Requires `floor < target < zero_rate` for the given states.
fn slope_search(states: &States, dist: &DistortionSpec, target: f64, opts: &SolverOptions) -> Result<SlopePoint> {
    let ny = dist.y_size();
    let warm: Vec<Vec<f64>> = (0..states.px.len()).map(|k| initial_law(ny, opts, k as u64)).collect();
    let scale = dist.d_max().max(f64::MIN_POSITIVE);
    let mut lo: Option<SlopePoint> = None;
    let mut lam_lo = 0.0;
    let mut lam_hi = 1.0 / scale;
    let mut hi = joint_at_slope(states, dist, lam_hi, &warm, opts)?;
    while hi.distortion >= target {
        if lam_hi > 1e12 / scale {
            // The constraint is only met in the limit: solve at infinite slope.
            return joint_at_slope(states, dist, f64::INFINITY, &hi.qs, opts);
        }
        lam_lo = lam_hi;
        lam_hi *= 2.0;
        let next = joint_at_slope(states, dist, lam_hi, &hi.qs, opts)?;
        lo = Some(std::mem::replace(&mut hi, next));
    }
    for _ in 0..200 {
        if lam_hi - lam_lo <= 4.0 * f64::EPSILON * lam_hi || target - hi.distortion <= 1e-14 * scale {
            break;
        }
        let mid = 0.5 * (lam_lo + lam_hi);
        let warm = &hi.qs;
        let p = joint_at_slope(states, dist, mid, warm, opts)?;
        if p.distortion >= target {
            lam_lo = mid;
            lo = Some(p);
        } else {
            lam_hi = mid;
            hi = p;
        }
    }
    if let Some(lo) = lo {
        if target > hi.distortion && lo.distortion >= target {
            return Ok(mix_points(&lo, &hi, target, states, dist));
        }
    }
    Ok(hi)
}

fn check_target(inst: &Instance, target: f64, opts: &SolverOptions) -> Result<()> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if !target.is_finite() || target < inst.d_floor - 1e-12 * inst.dist.d_max().max(1.0) {
        return Err(Error::InfeasibleDistortion { distortion: target, floor: inst.d_floor });
    }
    Ok(())
}

fn zero_rate_solution(inst: &Instance, target: f64) -> CrdSolution {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let mut channel = vec![0.0; nx * ns * ny];
    let mut induced = vec![0.0; ns * ny];
    let mut achieved = 0.0;
    for s in 0..ns {
        let best = match inst.source.conditional(s) {
            Some(px) => (0..ny)
                .map(|y| (y, px.iter().enumerate().map(|(x, p)| p * inst.dist.d(x, y)).sum::<f64>()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(y, _)| y)
                .unwrap_or(0),
            None => 0,
        };
        induced[s * ny + best] = 1.0;
        for x in 0..nx {
            channel[(x * ns + s) * ny + best] = 1.0;
        }
        achieved += inst.source.p_s()[s] * inst.d_max_s[s];
    }
    let slack = target - inst.d_zero_rate;
    CrdSolution {
        x_size: nx,
        s_size: ns,
        y_size: ny,
        target,
        rate: Nats(0.0),
        slope: 0.0,
        channel,
        induced,
        distortion_achieved: achieved,
        allocation: inst.d_max_s.iter().map(|d| d + slack).collect(),
        per_state_rate: vec![0.0; ns],
        gap: 0.0,
        method: Method::ZeroRate,
        cross_check: None,
    }
}

/// Per-state output law for a null side-information state at a given slope,
/// so the tilted density is defined on the whole `X × S` grid.
fn null_state_law(dist: &DistortionSpec, lambda: f64, opts: &SolverOptions) -> Vec<f64> {
    let ny = dist.y_size();
    let nx = dist.x_size();
    let px = vec![1.0 / nx as f64; nx];
    let states = States { idx: vec![0], weight: vec![1.0], px: vec![px] };
    match joint_at_slope(&states, dist, lambda, &[vec![1.0 / ny as f64; ny]], opts) {
        Ok(p) => p.outcomes[0].induced.clone(),
        Err(_) => vec![1.0 / ny as f64; ny],
    }
}

fn assemble(
    inst: &Instance,
    target: f64,
    states: &States,
    point: &SlopePoint,
    method: Method,
    opts: &SolverOptions,
) -> CrdSolution {
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let mut channel = vec![0.0; nx * ns * ny];
    let mut induced = vec![0.0; ns * ny];
    let mut allocation = inst.d_max_s.clone();
    let mut per_state_rate = vec![0.0; ns];
    let mut live = vec![false; ns];
    for (k, &s) in states.idx.iter().enumerate() {
        live[s] = true;
        let o = &point.outcomes[k];
        for x in 0..nx {
            for y in 0..ny {
                channel[(x * ns + s) * ny + y] = o.channel[x * ny + y];
            }
        }
        induced[s * ny..(s + 1) * ny].copy_from_slice(&o.induced);
        allocation[s] = o.distortion;
        per_state_rate[s] = o.rate;
    }
    for s in (0..ns).filter(|&s| !live[s]) {
        let law = null_state_law(&inst.dist, point.lambda, opts);
        let kern = kernel(&inst.dist, point.lambda);
        for x in 0..nx {
            let z: f64 = (0..ny).map(|y| law[y] * kern[x * ny + y]).sum();
            for y in 0..ny {
                channel[(x * ns + s) * ny + y] = if z > 0.0 { law[y] * kern[x * ny + y] / z } else { 0.0 };
            }
        }
        induced[s * ny..(s + 1) * ny].copy_from_slice(&law);
    }
    CrdSolution {
        x_size: nx,
        s_size: ns,
        y_size: ny,
        target,
        rate: Nats(point.rate),
        slope: point.lambda,
        channel,
        induced,
        distortion_achieved: point.distortion,
        allocation,
        per_state_rate,
        gap: point.gap,
        method,
        cross_check: None,
    }
}

/// Route (a): joint alternating minimisation with one multiplier.
pub fn solve_crd_direct(inst: &Instance, target: f64, opts: &SolverOptions) -> Result<CrdSolution> {
    check_target(inst, target, opts)?;
    if target >= inst.d_zero_rate {
        return Ok(zero_rate_solution(inst, target));
    }
    let states = States::of(inst);
    let point = if target <= inst.d_floor {
        let ny = inst.y_size();
        let warm: Vec<Vec<f64>> = (0..states.px.len()).map(|k| initial_law(ny, opts, k as u64)).collect();
        joint_at_slope(&states, &inst.dist, f64::INFINITY, &warm, opts)?
    } else {
        slope_search(&states, &inst.dist, target, opts)?
    };
    Ok(assemble(inst, target, &states, &point, Method::Direct, opts))
}

/// Rate-distortion solution for a single source without side information.
#[derive(Debug, Clone, PartialEq)]
pub struct PerStateSolution {
    pub rate: f64,
    /// `P_{Y*|X}` as `[x * y_size + y]`.
    pub channel: Vec<f64>,
    pub induced: Vec<f64>,
    pub slope: f64,
    pub distortion: f64,
}

/// `R(P_X, D)` for a source without side information.
pub fn solve_rd_per_state(px: &[f64], dist: &DistortionSpec, target: f64, tol: f64) -> Result<PerStateSolution> {
    let opts = SolverOptions::with_tol(tol);
    solve_rd_per_state_with(px, dist, target, &opts)
}

pub fn solve_rd_per_state_with(
    px: &[f64],
    dist: &DistortionSpec,
    target: f64,
    opts: &SolverOptions,
) -> Result<PerStateSolution> {
    let source = JointSource::from_flat(px.len(), 1, px.to_vec())?;
    let inst = validate(source, dist.clone())?;
    let sol = solve_crd_direct(&inst, target, opts)?;
    Ok(PerStateSolution {
        rate: sol.rate.0,
        channel: sol.channel,
        induced: sol.induced,
        slope: sol.slope,
        distortion: sol.distortion_achieved,
    })
}

/// A convex, nonincreasing rate-distortion curve usable by
/// [`allocate_distortion`]. Slopes are magnitudes (`-dR/dd ≥ 0`).
pub trait RdCurve {
    /// Smallest feasible distortion.
    fn floor(&self) -> f64;
    /// Smallest distortion with zero rate.
    fn zero_rate(&self) -> f64;
    fn rate(&self, d: f64) -> Result<f64>;
    fn slope(&self, d: f64) -> Result<f64>;

    /// Distortion at which the curve's slope magnitude equals `lambda`.
    /// The default inverts [`RdCurve::slope`] by bisection.
    fn distortion_at_slope(&self, lambda: f64) -> Result<f64> {
        let (mut lo, mut hi) = (self.floor(), self.zero_rate());
        if hi <= lo {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope(mid)? > lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Distortion budgets per side-information symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub d: Vec<f64>,
    /// Common slope magnitude shared by the interior budgets.
    pub slope: f64,
    /// `false` for states with zero probability (excluded from the objective).
    pub active: Vec<bool>,
}

/// Splits the budget `D` into `{d_s}` minimising `Σ P_S(s) R_s(d_s)` subject to
/// `Σ P_S(s) d_s = D`, by bisection on the common slope.
pub fn allocate_distortion(curves: &[&dyn RdCurve], p_s: &[f64], target: f64) -> Result<Allocation> {
    if curves.len() != p_s.len() {
        return Err(Error::Shape("one curve per side-information symbol".into()));
    }
    let active: Vec<bool> = p_s.iter().map(|&p| p > 0.0).collect();
    let floor: f64 = curves.iter().zip(p_s).map(|(c, p)| p * c.floor()).sum();
    let top: f64 = curves.iter().zip(p_s).map(|(c, p)| p * c.zero_rate()).sum();
    let mass: f64 = p_s.iter().sum();
    if target < floor - 1e-12 {
        return Err(Error::InfeasibleDistortion { distortion: target, floor });
    }
    let at = |lambda: f64| -> Result<Vec<f64>> {
        curves
            .iter()
            .zip(&active)
            .map(|(c, &a)| if a { c.distortion_at_slope(lambda) } else { Ok(c.zero_rate()) })
            .collect()
    };
    let total = |d: &[f64]| -> f64 { d.iter().zip(p_s).map(|(d, p)| d * p).sum() };
    if target >= top {
        let spread = (target - top) / mass;
        let d = curves.iter().map(|c| c.zero_rate() + spread).collect();
        return Ok(Allocation { d, slope: 0.0, active });
    }
    if target <= floor {
        let d = curves.iter().map(|c| c.floor()).collect();
        return Ok(Allocation { d, slope: f64::INFINITY, active });
    }
    let mut lam_lo = 0.0;
    let mut d_lo: Vec<f64> = curves.iter().map(|c| c.zero_rate()).collect();
    let mut lam_hi = 1.0;
    let mut d_hi = at(lam_hi)?;
    while total(&d_hi) >= target {
        lam_lo = lam_hi;
        d_lo = d_hi;
        lam_hi *= 2.0;
        if lam_hi > 1e15 {
            return Err(Error::NonConvergence { iterations: 50, gap: total(&d_lo) - target });
        }
        d_hi = at(lam_hi)?;
    }
    for _ in 0..200 {
        if lam_hi - lam_lo <= 4.0 * f64::EPSILON * lam_hi {
            break;
        }
        let mid = 0.5 * (lam_lo + lam_hi);
        let d = at(mid)?;
        if total(&d) >= target {
            lam_lo = mid;
            d_lo = d;
        } else {
            lam_hi = mid;
            d_hi = d;
        }
    }
    // Interpolate the two brackets so the budget is met exactly.
    let (tl, th) = (total(&d_lo), total(&d_hi));
    let theta = if tl > th { ((target - th) / (tl - th)).clamp(0.0, 1.0) } else { 0.0 };
    let d = d_lo.iter().zip(&d_hi).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
    Ok(Allocation { d, slope: 0.5 * (lam_lo + lam_hi), active })
}

/// Rate-distortion curve of one conditional source, backed by the solver.
pub struct SolverCurve<'a> {
    pub px: Vec<f64>,
    pub dist: &'a DistortionSpec,
    pub opts: SolverOptions,
    floor: f64,
    zero_rate: f64,
}

impl<'a> SolverCurve<'a> {
    pub fn new(px: Vec<f64>, dist: &'a DistortionSpec, opts: SolverOptions) -> Self {
        let floor = px.iter().enumerate().map(|(x, p)| p * dist.d_min_x(x)).sum();
        let zero_rate = (0..dist.y_size())
            .map(|y| px.iter().enumerate().map(|(x, p)| p * dist.d(x, y)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        SolverCurve { px, dist, opts, floor, zero_rate }
    }
}

impl RdCurve for SolverCurve<'_> {
    fn floor(&self) -> f64 {
        self.floor
    }
    fn zero_rate(&self) -> f64 {
        self.zero_rate
    }
    fn rate(&self, d: f64) -> Result<f64> {
        Ok(solve_rd_per_state_with(&self.px, self.dist, d, &self.opts)?.rate)
    }
    fn slope(&self, d: f64) -> Result<f64> {
        Ok(solve_rd_per_state_with(&self.px, self.dist, d, &self.opts)?.slope)
    }
    fn distortion_at_slope(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(self.zero_rate);
        }
        let states = States { idx: vec![0], weight: vec![1.0], px: vec![self.px.clone()] };
        let ny = self.dist.y_size();
        let p = joint_at_slope(&states, self.dist, lambda, &[vec![1.0 / ny as f64; ny]], &self.opts)?;
        Ok(p.distortion.min(self.zero_rate))
    }
}

/// Route (b): per-state curves plus equal-slope allocation of the budget.
pub fn solve_crd_decomposed(inst: &Instance, target: f64, opts: &SolverOptions) -> Result<CrdSolution> {
    check_target(inst, target, opts)?;
    if target >= inst.d_zero_rate {
        return Ok(zero_rate_solution(inst, target));
    }
    let (nx, ns, ny) = (inst.x_size(), inst.s_size(), inst.y_size());
    let conds: Vec<Vec<f64>> = (0..ns)
        .map(|s| inst.source.conditional(s).unwrap_or_else(|| vec![1.0 / nx as f64; nx]))
        .collect();
    let curves: Vec<SolverCurve> = conds.iter().map(|c| SolverCurve::new(c.clone(), &inst.dist, *opts)).collect();
    let dyn_curves: Vec<&dyn RdCurve> = curves.iter().map(|c| c as &dyn RdCurve).collect();
    let alloc = allocate_distortion(&dyn_curves, inst.source.p_s(), target)?;

    let mut channel = vec![0.0; nx * ns * ny];
    let mut induced = vec![0.0; ns * ny];
    let mut per_state_rate = vec![0.0; ns];
    let mut achieved = 0.0;
    for s in 0..ns {
        if !alloc.active[s] {
            continue;
        }
        let sol = solve_rd_per_state_with(&conds[s], &inst.dist, alloc.d[s], opts)?;
        for x in 0..nx {
            for y in 0..ny {
                channel[(x * ns + s) * ny + y] = sol.channel[x * ny + y];
            }
        }
        induced[s * ny..(s + 1) * ny].copy_from_slice(&sol.induced);
        per_state_rate[s] = sol.rate;
        achieved += inst.source.p_s()[s] * sol.distortion;
    }
    let rate = per_state_rate.iter().zip(inst.source.p_s()).map(|(r, p)| r * p).sum();
    Ok(CrdSolution {
        x_size: nx,
        s_size: ns,
        y_size: ny,
        target,
        rate: Nats(rate),
        slope: alloc.slope,
        channel,
        induced,
        distortion_achieved: achieved,
        allocation: alloc.d,
        per_state_rate,
        gap: opts.tol,
        method: Method::Decomposed,
        cross_check: None,
    })
}

/// Solves `R(X;D|S)` by both routes and returns the direct solution with the
/// cross-check recorded. Disagreement beyond `10 · tol` is a non-convergence.
pub fn solve_crd(inst: &Instance, target: f64, opts: &SolverOptions) -> Result<CrdSolution> {
    let mut direct = solve_crd_direct(inst, target, opts)?;
    if direct.is_zero_rate() {
        return Ok(direct);
    }
    let decomposed = solve_crd_decomposed(inst, target, opts)?;
    let diff = (direct.rate.0 - decomposed.rate.0).abs();
    if diff > 10.0 * opts.tol {
        return Err(Error::NonConvergence { iterations: opts.max_iter, gap: diff });
    }
    direct.cross_check = Some(diff);
    Ok(direct)
}

/// `R(X;D|S)` evaluated on a grid of distortion levels.
pub fn rd_curve(inst: &Instance, grid: &[f64], opts: &SolverOptions) -> Result<Vec<CrdSolution>> {
    grid.iter().map(|&d| solve_crd_direct(inst, d, opts)).collect()
}

/// Finite-difference gradient of `R` with respect to the joint pmf.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub x_size: usize,
    pub s_size: usize,
    /// `[x * s_size + s]`; `NaN` where the perturbed problem failed.
    pub entries: Vec<f64>,
    pub failures: Vec<(usize, usize, Error)>,
}

impl Gradient {
    pub fn get(&self, x: usize, s: usize) -> f64 {
        self.entries[x * self.s_size + s]
    }
}

/// `R` extended off the simplex as a degree-one homogeneous function:
/// `R̄(P̄) = |P̄| · R(P̄ / |P̄|, D)` with `|P̄| = Σ P̄`.
pub fn homogeneous_rate(inst: &Instance, pmf: &[f64], target: f64, opts: &SolverOptions) -> Result<f64> {
    let mass: f64 = pmf.iter().sum();
    let normalized: Vec<f64> = pmf.iter().map(|p| p / mass).collect();
    let source = JointSource::from_flat(inst.x_size(), inst.s_size(), normalized)?;
    let perturbed = validate(source, inst.dist.clone())?;
    Ok(mass * solve_crd_direct(&perturbed, target, opts)?.rate.0)
}

/// Gradient of `R(X;D|S)` with respect to the joint masses `P_XS(a, b)`,
/// treated as free variables through [`homogeneous_rate`]. Central
/// differences with step `h` (forward differences where `P_XS(a,b) < h`).
pub fn rd_gradient(inst: &Instance, target: f64, h: f64, opts: &SolverOptions) -> Result<Gradient> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidParameter(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let base = solve_crd_direct(inst, target, opts)?.rate.0;
    let (nx, ns) = (inst.x_size(), inst.s_size());
    let pmf = inst.source.pmf().to_vec();
    let mut entries = vec![f64::NAN; nx * ns];
    let mut failures = Vec::new();
    for a in 0..nx {
        for b in 0..ns {
            let i = a * ns + b;
            let mut plus = pmf.clone();
            plus[i] += h;
            let up = homogeneous_rate(inst, &plus, target, opts);
            let down = if pmf[i] >= h {
                let mut minus = pmf.clone();
                minus[i] -= h;
                Some(homogeneous_rate(inst, &minus, target, opts))
            } else {
                None
            };
            match (up, down) {
                (Ok(u), Some(Ok(d))) => entries[i] = (u - d) / (2.0 * h),
                (Ok(u), None) => entries[i] = (u - base) / h,
                (Err(e), _) | (_, Some(Err(e))) => failures.push((a, b, e)),
            }
        }
    }
    Ok(Gradient { x_size: nx, s_size: ns, entries, failures })
}
