//! Jointly Gaussian source with side information under squared error.
//!
//! The model is `S = X + Z` with independent `X ~ N(0, σ²_X)` and
//! `Z ~ N(0, σ²_Z)`. Given `S = s`, `X` is normal with mean
//! `μ(s) = σ²_X/(σ²_X+σ²_Z)·s` and variance
//! `σ²_{X|S} = σ²_X σ²_Z/(σ²_X+σ²_Z)`, so everything reduces to the residual
//! `Xⁿ - μ(Sⁿ)` whose squared norm over `σ²_{X|S}` is `χ²_n`.
//!
//! Radii are normalized as `z = |xⁿ - μ(sⁿ)|² / (n σ²_{X|S})`, so `nz ~ χ²_n`.
//! With `a = D/σ²_{X|S}` the random code draws codewords uniformly on the
//! sphere of radius `r₀ = √(n(σ²_{X|S} - D))` around `μ(sⁿ)`, and a codeword
//! covers `xⁿ` when its angle to `xⁿ - μ(sⁿ)` is at most `θ` with
//!
//! `cos θ = (1 + z - 2a) / (2 √((1-a) z))`.
//!
//! `cos θ ≥ 1` means no point of the sphere is within distortion `D`,
//! `cos θ ≤ -1` means the whole sphere is.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    achievability_ln_m, converse_ln_m, converse_lower_with, second_order_rate, BallSample, BoundResult, BoundTerm,
    DensitySum, FblQuery,
};
use crate::error::{Error, Result};
use crate::math::{chi2_cdf, chi2_ln_pdf, chi2_sf, lgamma, ln_beta_reg, one_minus_p_pow_m, Nats};
use crate::mc::{map_trials, Estimate, DEFAULT_CHUNK};
use crate::quad::integrate_pieces;

/// Dispersion of the Gaussian source, nats², whatever the variances.
pub const GAUSSIAN_DISPERSION: f64 = 0.5;

/// Largest blocklength accepted by the empirical codeword mode.
pub const EMPIRICAL_MAX_N: usize = 20;
/// Largest codebook accepted by the empirical codeword mode.
pub const EMPIRICAL_MAX_M: f64 = 1_048_576.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub var_x: f64,
    pub var_z: f64,
    pub distortion: f64,
}

impl GaussianModel {
    pub fn new(var_x: f64, var_z: f64, distortion: f64) -> Result<Self> {
        for (name, v) in [("var_x", var_x), ("var_z", var_z), ("distortion", distortion)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(GaussianModel { var_x, var_z, distortion })
    }

    /// `σ²_{X|S}`.
    pub fn var_x_given_s(&self) -> f64 {
        self.var_x * self.var_z / (self.var_x + self.var_z)
    }

    /// Correlation coefficient of `X` and `S`.
    pub fn correlation(&self) -> f64 {
        (self.var_x / (self.var_x + self.var_z)).sqrt()
    }

    pub fn mmse_coeff(&self) -> f64 {
        self.var_x / (self.var_x + self.var_z)
    }

    /// `E[X | S = s]`.
    pub fn mu(&self, s: f64) -> f64 {
        self.mmse_coeff() * s
    }

    pub fn is_zero_rate(&self) -> bool {
        self.distortion >= self.var_x_given_s()
    }

    pub fn cap_params(&self, n: usize, ln_m: f64) -> SphereCapParams {
        let nf = n as f64;
        let r0 = (nf * (self.var_x_given_s() - self.distortion).max(0.0)).sqrt();
        let rd = (nf * self.distortion).sqrt();
        SphereCapParams { n, r0, r1: r0 - rd, r2: r0 + rd, ln_m }
    }
}

/// Geometry of the spherical random code at blocklength `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereCapParams {
    pub n: usize,
    pub r0: f64,
    /// May be negative: then the sphere fits inside every ball centred
    /// within `-r1` of `μ(sⁿ)`.
    pub r1: f64,
    pub r2: f64,
    pub ln_m: f64,
}

impl SphereCapParams {
    /// `cos θ` for a residual of Euclidean norm `radius`.
    pub fn cos_theta(&self, model: &GaussianModel, radius: f64) -> f64 {
        let nd = self.n as f64 * model.distortion;
        let num = radius * radius + self.r0 * self.r0 - nd;
        if radius == 0.0 {
            return if num > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        num / (2.0 * radius * self.r0)
    }
}

/// `R(X;D|S) = ½ ln(σ²_{X|S}/D)`, or 0 when `D ≥ σ²_{X|S}`.
pub fn gaussian_crd(model: &GaussianModel) -> Nats {
    if model.is_zero_rate() {
        Nats(0.0)
    } else {
        Nats(0.5 * (model.var_x_given_s() / model.distortion).ln())
    }
}

pub fn gaussian_dispersion(model: &GaussianModel) -> f64 {
    if model.is_zero_rate() {
        0.0
    } else {
        GAUSSIAN_DISPERSION
    }
}

/// `Σ j(xᵢ,D|sᵢ) = (n/2) ln(σ²_{X|S}/D) + |xⁿ - μ(sⁿ)|²/(2σ²_{X|S}) - n/2`.
/// Identically zero in the zero-rate regime.
pub fn gaussian_tilted_density(model: &GaussianModel, x: &[f64], s: &[f64]) -> Result<Nats> {
    if x.len() != s.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: s.len() });
    }
    if model.is_zero_rate() {
        return Ok(Nats(0.0));
    }
    let var = model.var_x_given_s();
    let c = model.mmse_coeff();
    let r2: f64 = x.iter().zip(s).map(|(&xi, &si)| (xi - c * si).powi(2)).sum();
    Ok(Nats(tilted_sum(model, x.len(), r2 / var)))
}

// sum of tilted densities given |residual|²/σ²_{X|S}
fn tilted_sum(model: &GaussianModel, n: usize, chi2: f64) -> f64 {
    if model.is_zero_rate() {
        return 0.0;
    }
    let nf = n as f64;
    0.5 * nf * (model.var_x_given_s() / model.distortion).ln() + 0.5 * chi2 - 0.5 * nf
}

pub fn gaussian_second_order_rate(model: &GaussianModel, n: usize, eps: f64) -> Result<f64> {
    second_order_rate(n, eps, gaussian_crd(model).0, gaussian_dispersion(model))
}

/// Exact law of `Σ j` at blocklength `n`: `offset + ½ χ²_n`.
pub fn gaussian_density_sum(model: &GaussianModel, n: usize) -> DensitySum {
    if model.is_zero_rate() {
        return DensitySum::Samples(vec![0.0]);
    }
    DensitySum::ChiSquare { dof: n as u64, offset: tilted_sum(model, n, 0.0), scale: 0.5 }
}

/// Converse lower bound on `ε` for codes of size `M = e^{ln_m}`.
pub fn gaussian_converse(model: &GaussianModel, n: usize, ln_m: f64) -> Result<BoundResult> {
    let q = FblQuery::new(n, model.distortion, 0.5, ln_m)?;
    Ok(converse_lower_with(&q, &gaussian_density_sum(model, n), gaussian_dispersion(model)))
}

/// Smallest `ln M` the converse allows at excess probability `ε`.
pub fn gaussian_converse_ln_m(model: &GaussianModel, n: usize, eps: f64) -> f64 {
    converse_ln_m(n, eps, &gaussian_density_sum(model, n), gaussian_dispersion(model))
}

// ---------------------------------------------------------------------------
// Caps.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapFormula {
    /// Exact normalized cap area via the incomplete beta function.
    Exact,
    /// `Γ(n/2+1)/(√π n Γ((n+1)/2)) sin^{n-1}θ`, a lower bound on the area.
    Sakrison,
}

/// `ln` of the fraction of the sphere in `ℝⁿ` within angle `θ` of a fixed
/// direction, or its Sakrison lower bound.
pub fn ln_cap_fraction(n: usize, cos_theta: f64, formula: CapFormula) -> f64 {
    if cos_theta.is_nan() || cos_theta >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if cos_theta <= -1.0 {
        return 0.0;
    }
    let nf = n as f64;
    let sin2 = (1.0 - cos_theta) * (1.0 + cos_theta);
    match formula {
        CapFormula::Sakrison => {
            let lf = lgamma(0.5 * nf + 1.0) - lgamma(0.5 * (nf + 1.0)) - 0.5 * PI.ln() - nf.ln()
                + 0.5 * (nf - 1.0) * sin2.ln();
            lf.min(0.0)
        }
        CapFormula::Exact => {
            let half = -std::f64::consts::LN_2
                + ln_beta_reg(0.5 * (nf - 1.0), 0.5, sin2.min(1.0)).expect("arguments are in range");
            if cos_theta >= 0.0 {
                half
            } else {
                (-half.exp()).ln_1p()
            }
        }
    }
}

/// Value of the spherical-code achievability integral with its pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereCapBound {
    pub value: f64,
    /// `n ∫ (1 - f(n,z))^M p_{χ²_n}(nz) dz` over the cap region.
    pub integral: f64,
    /// `Pr[|Xⁿ - μ(Sⁿ)| < r₁]`.
    pub below: f64,
    /// `Pr[|Xⁿ - μ(Sⁿ)| > r₂]`.
    pub above: f64,
    pub quad_error: f64,
    pub params: SphereCapParams,
}

/// Achievability bound on `ε` for the spherical random code of size
/// `M = e^{ln_m}`, with Sakrison caps. `quad_tol` is relative.
pub fn sphere_cap_bound(model: &GaussianModel, n: usize, ln_m: f64, quad_tol: f64) -> Result<SphereCapBound> {
    if n < 2 {
        return Err(Error::InvalidParameter("blocklength must be at least 2".into()));
    }
    if !(ln_m >= 0.0) {
        return Err(Error::InvalidParameter(format!("ln M must be nonnegative, got {ln_m}")));
    }
    let params = model.cap_params(n, ln_m);
    let nf = n as f64;
    let var = model.var_x_given_s();
    if model.is_zero_rate() {
        let above = chi2_sf(n as u64, nf * model.distortion / var);
        return Ok(SphereCapBound { value: above, integral: 0.0, below: 0.0, above, quad_error: 0.0, params });
    }
    let a = model.distortion / var;
    let z_lo = params.r1 * params.r1 / (nf * var);
    let z_hi = params.r2 * params.r2 / (nf * var);
    let below = if params.r1 > 0.0 { chi2_cdf(n as u64, nf * z_lo) } else { 0.0 };
    let above = chi2_sf(n as u64, nf * z_hi);

    let integrand = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let cos = (1.0 + z - 2.0 * a) / (2.0 * ((1.0 - a) * z).sqrt());
        let ln_f = ln_cap_fraction(n, cos, CapFormula::Sakrison);
        let ln_pdf = nf.ln() + chi2_ln_pdf(n as u64, nf * z);
        ln_pdf.exp() * one_minus_p_pow_m(ln_f, ln_m)
    };
    let width = (2.0 / nf).sqrt();
    let mut breaks = vec![z_lo, z_hi];
    breaks.extend((-12..=12).map(|k| 1.0 + k as f64 * width).filter(|&z| z > z_lo && z < z_hi));
    breaks.sort_by(f64::total_cmp);
    let (integral, quad_error) = integrate_pieces(integrand, &breaks, 1e-15, quad_tol)?;
    Ok(SphereCapBound {
        value: (integral + below + above).clamp(0.0, 1.0),
        integral,
        below,
        above,
        quad_error,
        params,
    })
}

// ---------------------------------------------------------------------------
// Simulation.

/// Fills `out` with standard normals by the Marsaglia polar method, using
/// both variates of each accepted pair.
pub fn fill_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s >= 1.0 || s == 0.0 {
            continue;
        }
        let f = (-2.0 * s.ln() / s).sqrt();
        out[i] = u * f;
        if i + 1 < out.len() {
            out[i + 1] = v * f;
        }
        i += 2;
    }
}

/// Draws `(xⁿ, sⁿ)` from the model.
pub fn sample_gaussian_pair<R: Rng + ?Sized>(model: &GaussianModel, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    fill_normals(rng, &mut x);
    fill_normals(rng, &mut z);
    let (sx, sz) = (model.var_x.sqrt(), model.var_z.sqrt());
    let s = x.iter().zip(&z).map(|(&a, &b)| sx * a + sz * b).collect();
    x.iter_mut().for_each(|v| *v *= sx);
    (x, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimulationMode {
    /// Cap probability from the residual radius.
    AnalyticCap(CapFormula),
    /// Draws all `M` codewords and checks them.
    Empirical,
}

/// Per-trial `Σ j` and `ln` cap probability, for any number of `ln M`
/// evaluations on common random numbers.
pub fn gaussian_ball_samples(
    model: &GaussianModel,
    n: usize,
    trials: usize,
    seed: u64,
    formula: CapFormula,
) -> Result<Vec<BallSample>> {
    if n < 2 {
        return Err(Error::InvalidParameter("blocklength must be at least 2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let params = model.cap_params(n, 0.0);
    let var = model.var_x_given_s();
    let c = model.mmse_coeff();
    let nd = n as f64 * model.distortion;
    Ok(map_trials(seed, trials, DEFAULT_CHUNK, |rng| {
        let (x, s) = sample_gaussian_pair(model, n, rng);
        let r2: f64 = x.iter().zip(&s).map(|(&xi, &si)| (xi - c * si).powi(2)).sum();
        let ln_ball = if model.is_zero_rate() {
            if r2 <= nd {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            ln_cap_fraction(n, params.cos_theta(model, r2.sqrt()), formula)
        };
        BallSample { sum_j: tilted_sum(model, n, r2 / var), ln_ball, window: f64::NAN }
    }))
}

/// Monte-Carlo excess-distortion probability of the spherical random code
/// of size `M = e^{ln_m}`.
pub fn gaussian_simulate(
    model: &GaussianModel,
    n: usize,
    ln_m: f64,
    trials: usize,
    seed: u64,
    mode: SimulationMode,
) -> Result<BoundResult> {
    let values: Vec<f64> = match mode {
        SimulationMode::AnalyticCap(formula) => gaussian_ball_samples(model, n, trials, seed, formula)?
            .iter()
            .map(|b| one_minus_p_pow_m(b.ln_ball, ln_m))
            .collect(),
        SimulationMode::Empirical => empirical_trials(model, n, ln_m, trials, seed)?,
    };
    let est = Estimate::from_samples(&values);
    Ok(BoundResult {
        value: est.mean,
        terms: vec![BoundTerm { name: "excess".into(), value: est.mean }],
        mc_stderr: Some(est.stderr),
        quantization: None,
        trials,
        gamma: None,
    })
}

fn empirical_trials(model: &GaussianModel, n: usize, ln_m: f64, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if !(2..=EMPIRICAL_MAX_N).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "empirical mode needs 2 <= n <= {EMPIRICAL_MAX_N}, got {n}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let m = ln_m.exp().round();
    if !(1.0..=EMPIRICAL_MAX_M).contains(&m) {
        return Err(Error::InvalidParameter(format!("empirical mode needs 1 <= M <= {EMPIRICAL_MAX_M}, got {m}")));
    }
    let m = m as usize;
    let params = model.cap_params(n, ln_m);
    let c = model.mmse_coeff();
    let nd = n as f64 * model.distortion;
    Ok(map_trials(seed, trials, DEFAULT_CHUNK, |rng| {
        let (x, s) = sample_gaussian_pair(model, n, rng);
        let e: Vec<f64> = x.iter().zip(&s).map(|(&xi, &si)| xi - c * si).collect();
        if model.is_zero_rate() {
            return if e.iter().map(|v| v * v).sum::<f64>() <= nd { 0.0 } else { 1.0 };
        }
        let mut g = vec![0.0; n];
        for _ in 0..m {
            fill_normals(rng, &mut g);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d2: f64 = e.iter().zip(&g).map(|(&ei, &gi)| (ei - params.r0 * gi / norm).powi(2)).sum();
            if d2 <= nd {
                return 0.0;
            }
        }
        1.0
    }))
}

/// Smallest `ln M` at which the simulated spherical code reaches `ε`.
pub fn gaussian_achievability_ln_m(eps: f64, samples: &[BallSample]) -> f64 {
    achievability_ln_m(eps, samples)
}

// ---------------------------------------------------------------------------
// Moments and second-order fits.

/// Monte-Carlo moments of the per-letter tilted density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterMoments {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance`.
    pub variance_stderr: f64,
    pub samples: usize,
}

pub fn letter_moments_mc(model: &GaussianModel, samples: usize, seed: u64) -> Result<LetterMoments> {
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let js = map_trials(seed, samples, 4096, |rng| {
        let (x, s) = sample_gaussian_pair(model, 1, rng);
        gaussian_tilted_density(model, &x, &s).expect("equal lengths").0
    });
    let nf = samples as f64;
    let mean = js.iter().sum::<f64>() / nf;
    let m2 = js.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / nf;
    let m4 = js.iter().map(|j| (j - mean).powi(4)).sum::<f64>() / nf;
    Ok(LetterMoments {
        mean,
        variance: m2 * nf / (nf - 1.0),
        variance_stderr: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        samples,
    })
}

/// Least-squares fit `ln M_n - nR ≈ a√n + b ln n + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderFit {
    /// `a`, which should approach `√V Q⁻¹(ε)`.
    pub sqrt_n: f64,
    pub ln_n: f64,
    pub constant: f64,
}

pub fn fit_second_order(points: &[(usize, f64)], rate: f64) -> Result<SecondOrderFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter("need at least three blocklengths".into()));
    }
    let rows = points.len();
    let a = DMatrix::from_fn(rows, 3, |i, j| {
        let n = points[i].0 as f64;
        [n.sqrt(), n.ln(), 1.0][j]
    });
    let b = DVector::from_fn(rows, |i, _| points[i].1 - points[i].0 as f64 * rate);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Domain(format!("second-order fit: {e}")))?;
    Ok(SecondOrderFit { sqrt_n: sol[0], ln_n: sol[1], constant: sol[2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::chunk_rng;

    fn unit() -> GaussianModel {
        GaussianModel::new(1.0, 1.0, 0.25).unwrap()
    }

    #[test]
    fn closed_forms() {
        let m = unit();
        assert_eq!(m.var_x_given_s(), 0.5);
        assert!((gaussian_crd(&m).0 - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((gaussian_crd(&m).0 - 0.346574).abs() < 1e-6);
        assert_eq!(gaussian_crd(&GaussianModel::new(1.0, 1.0, 0.5).unwrap()).0, 0.0);
        let far = GaussianModel::new(2.0, 1e12, 0.1).unwrap();
        assert!((gaussian_crd(&far).0 - 0.5 * 20f64.ln()).abs() < 1e-9);
        assert!((m.correlation() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mu(2.0), 1.0);
        assert!(GaussianModel::new(0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn tilted_density_at_the_estimate() {
        let m = unit();
        let s = vec![0.4, -1.0, 2.0];
        let x: Vec<f64> = s.iter().map(|&v| m.mu(v)).collect();
        let j = gaussian_tilted_density(&m, &x, &s).unwrap().0;
        assert!((j - (1.5 * 2f64.ln() - 1.5)).abs() < 1e-14);
        assert!(gaussian_tilted_density(&m, &x[..2], &s).is_err());
    }

    #[test]
    fn cap_fraction_in_three_dimensions() {
        // Archimedes: the cap of half-angle θ on S² has area fraction (1 - cos θ)/2
        for &c in &[0.9, 0.5, 0.1, 0.0, -0.3, -0.95] {
            let p = ln_cap_fraction(3, c, CapFormula::Exact).exp();
            assert!((p - 0.5 * (1.0 - c)).abs() < 1e-13, "cos {c}");
            assert!(ln_cap_fraction(3, c, CapFormula::Sakrison).exp() <= p + 1e-15);
        }
        assert_eq!(ln_cap_fraction(7, 1.0, CapFormula::Exact), f64::NEG_INFINITY);
        assert_eq!(ln_cap_fraction(7, -1.5, CapFormula::Sakrison), 0.0);
    }

    #[test]
    fn sakrison_never_exceeds_exact() {
        for &n in &[2usize, 5, 40, 500, 5000] {
            for i in 1..40 {
                let c = -1.0 + i as f64 / 20.0;
                let e = ln_cap_fraction(n, c, CapFormula::Exact);
                let s = ln_cap_fraction(n, c, CapFormula::Sakrison);
                assert!(s <= e + 1e-12, "n {n} cos {c}: {s} > {e}");
            }
        }
    }

    #[test]
    fn polar_normals_have_unit_moments() {
        let mut rng = chunk_rng(5, 0);
        let mut v = vec![0.0; 200_001];
        fill_normals(&mut rng, &mut v);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| x * x).sum::<f64>() / n - mean * mean;
        assert!(mean.abs() < 5.0 / n.sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn cap_bound_basics() {
        let m = unit();
        let b1 = sphere_cap_bound(&m, 100, 0.0, 1e-8).unwrap();
        assert!(b1.value >= 0.5);
        let mut prev = 1.0;
        for k in 0..8 {
            let b = sphere_cap_bound(&m, 100, 10.0 * k as f64, 1e-8).unwrap();
            assert!((0.0..=1.0).contains(&b.value));
            assert!(b.value <= prev + 1e-12);
            prev = b.value;
        }
    }

    #[test]
    fn zero_rate_simulation_matches_chi_square() {
        let m = GaussianModel::new(1.0, 1.0, 0.55).unwrap();
        let exact = chi2_sf(30, 30.0 * 0.55 / 0.5);
        let r = gaussian_simulate(&m, 30, 3.0, 20_000, 3, SimulationMode::AnalyticCap(CapFormula::Exact)).unwrap();
        assert!((r.value - exact).abs() < 3.0 * r.mc_stderr.unwrap().max(1e-4));
        assert_eq!(sphere_cap_bound(&m, 30, 3.0, 1e-8).unwrap().value, exact);
    }

    #[test]
    fn converse_is_exact_chi_square() {
        let m = unit();
        let sum = gaussian_density_sum(&m, 50);
        let mean = sum.expect(|x| x);
        assert!((mean - 50.0 * gaussian_crd(&m).0).abs() < 1e-7);
        let var = sum.expect(|x| (x - mean).powi(2));
        assert!((var - 25.0).abs() < 1e-6);
    }

    #[test]
    fn fit_recovers_coefficients() {
        let pts: Vec<(usize, f64)> = [100usize, 300, 900, 2000]
            .iter()
            .map(|&n| (n, 0.3 * n as f64 + 1.1 * (n as f64).sqrt() - 0.5 * (n as f64).ln() + 2.0))
            .collect();
        let f = fit_second_order(&pts, 0.3).unwrap();
        assert!((f.sqrt_n - 1.1).abs() < 1e-8);
        assert!((f.ln_n + 0.5).abs() < 1e-8);
    }
}
