//! Scalar numerical primitives shared by every other module.
//!
//! All information quantities are in nats. The only place bits appear is
//! [`Nats::bits`], which the CLI uses for display.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// An information quantity measured with the natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats(pub f64);

impl Nats {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn bits(self) -> f64 {
        self.0 / LN_2
    }
}

impl fmt::Display for Nats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nats", self.0)
    }
}

impl From<f64> for Nats {
    fn from(v: f64) -> Self {
        Nats(v)
    }
}

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `x ln(x / y)` with `0 ln(0/y) = 0`.
#[inline]
pub fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Standard normal density.
#[inline]
pub fn gaussian_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, computed from the complementary error function so
/// that both tails keep full relative precision.
pub fn gaussian_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-t / SQRT_2)
}

/// Complementary CDF `Q(t) = 1 - Φ(t)`.
pub fn gaussian_q(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(t / SQRT_2)
}

/// Inverse of [`gaussian_q`]: returns `t` with `Q(t) = eps`.
///
/// Newton iterations on `ln Q(t) - ln eps`, kept inside a shrinking bisection
/// bracket. Uses the antisymmetry `Q⁻¹(1 - eps) = -Q⁻¹(eps)`.
pub fn gaussian_q_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("Q⁻¹ requires 0 < eps < 1, got {eps}")));
    }
    if eps == 0.5 {
        return Ok(0.0);
    }
    if eps > 0.5 {
        return Ok(-q_inv_upper(1.0 - eps));
    }
    Ok(q_inv_upper(eps))
}

// eps in (0, 0.5): root lies in [0, 38.5].
fn q_inv_upper(eps: f64) -> f64 {
    let target = eps.ln();
    let (mut lo, mut hi) = (0.0_f64, 38.5_f64);
    // Tail asymptote as the starting point.
    let mut t = (-2.0 * target - (-2.0 * target).ln() - (2.0 * PI).ln())
        .max(0.0)
        .sqrt();
    for _ in 0..200 {
        let q = gaussian_q(t);
        let g = q.ln() - target;
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if g == 0.0 {
            return t;
        }
        // d/dt ln Q(t) = -φ(t)/Q(t)
        let slope = -gaussian_pdf(t) / q;
        let mut next = t - g / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.abs().max(1.0) || hi - lo <= 1e-15 {
            return next;
        }
        t = next;
    }
    t
}

/// Binary entropy in nats with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    -xlogx(p) - xlogx(1.0 - p)
}

/// Shannon entropy of a probability vector, in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlogx(v)).sum::<f64>()
}

/// Aggregated Berry-Esséen quantities for a sum of independent terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenTerms {
    /// Sum of the variances.
    pub sigma2: f64,
    /// Sum of the absolute third central moments.
    pub t3: f64,
    /// `6 T / σ³`; infinite when the variance vanishes but `T` does not.
    pub bound: f64,
}

/// Aggregates `(mean, variance, E|X - mean|³)` triples into the
/// Berry-Esséen constant `6 T / σ³`.
///
/// A sum with zero variance and zero third moment is a constant; its bound is
/// reported as 0.
pub fn berry_esseen_bound(terms: &[(f64, f64, f64)]) -> Result<BerryEsseenTerms> {
    let mut sigma2 = 0.0;
    let mut t3 = 0.0;
    for (k, &(_, var, abs3)) in terms.iter().enumerate() {
        if !(var >= 0.0) || !(abs3 >= 0.0) {
            return Err(Error::Domain(format!(
                "term {k}: variance and third moment must be nonnegative"
            )));
        }
        sigma2 += var;
        t3 += abs3;
    }
    let bound = if sigma2 == 0.0 {
        if t3 > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        6.0 * t3 / sigma2.powf(1.5)
    };
    Ok(BerryEsseenTerms { sigma2, t3, bound })
}

/// Log of the central chi-square density with `k` degrees of freedom.
pub fn chi2_ln_pdf(k: u64, x: f64) -> f64 {
    if x < 0.0 || k == 0 {
        return f64::NEG_INFINITY;
    }
    let half_k = k as f64 / 2.0;
    if x == 0.0 {
        return match k {
            1 => f64::INFINITY,
            2 => -LN_2,
            _ => f64::NEG_INFINITY,
        };
    }
    (half_k - 1.0) * x.ln() - 0.5 * x - half_k * LN_2 - ln_gamma(half_k)
}

/// Central chi-square density, evaluated in log space (stable for `k` up to 10⁶).
/// Negative arguments have density 0.
pub fn chi2_pdf(k: u64, x: f64) -> f64 {
    chi2_ln_pdf(k, x).exp()
}

/// `Pr[χ²_k ≤ x]`.
pub fn chi2_cdf(k: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(k as f64 / 2.0, x / 2.0)
}

/// `Pr[χ²_k > x]`, computed directly rather than as `1 - cdf`.
pub fn chi2_sf(k: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(k as f64 / 2.0, x / 2.0)
}

pub use statrs::function::gamma::ln_gamma as lgamma;

/// `ln Σ exp(v)` over a slice; `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln I_x(a, b)`, log of the regularized incomplete beta function, usable
/// when the value itself underflows.
pub fn ln_beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete beta arguments a={a}, b={b}, x={x}"
        )));
    }
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_beta_front(a, b, x) + beta_cf(a, b, x).ln() - a.ln())
    } else {
        let other = (ln_beta_front(b, a, 1.0 - x) + beta_cf(b, a, 1.0 - x).ln() - b.ln()).exp();
        Ok((-other).ln_1p())
    }
}

fn ln_beta_front(a: f64, b: f64, x: f64) -> f64 {
    a * x.ln() + b * (-x).ln_1p() - statrs::function::beta::ln_beta(a, b)
}

// modified Lentz
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// `(1 - p)^M` from `ln p` and `ln M`, computed as `exp(M · log1p(-p))`
/// without ever forming `M` or `p` when they are out of range.
pub fn one_minus_p_pow_m(ln_p: f64, ln_m: f64) -> f64 {
    if ln_p == f64::NEG_INFINITY {
        return 1.0;
    }
    if ln_p >= 0.0 {
        return 0.0;
    }
    // ln(-log1p(-p)); for small p this is ln p + p/2 + ...
    let p = ln_p.exp();
    let ln_neg_log1p = if p < 1e-8 {
        ln_p + 0.5 * p
    } else {
        (-(-p).ln_1p()).ln()
    };
    let exponent = ln_m + ln_neg_log1p;
    if exponent < -745.0 {
        return 1.0;
    }
    (-exponent.exp()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_beta_agrees_where_representable() {
        for &(a, b) in &[(0.5, 0.5), (2.0, 3.0), (49.5, 0.5), (10.0, 0.5), (0.5, 30.0)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let reference = statrs::function::beta::beta_reg(a, b, x);
                let ours = ln_beta_reg(a, b, x).unwrap().exp();
                assert!((ours - reference).abs() < 1e-12, "a={a} b={b} x={x}");
            }
        }
        // I_x(a, 1) = x^a
        let v = ln_beta_reg(2000.0, 1.0, 0.5).unwrap();
        assert!((v - 2000.0 * 0.5f64.ln()).abs() < 1e-9);
        assert!(ln_beta_reg(1.0, 1.0, 1.5).is_err());
    }

    // Composite Simpson on the Gaussian density: independent of erfc.
    fn phi_by_quadrature(t: f64) -> f64 {
        let a = -12.0;
        let n = 200_000;
        let h = (t - a) / n as f64;
        let mut s = gaussian_pdf(a) + gaussian_pdf(t);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * gaussian_pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(gaussian_cdf(0.0), 0.5);
        assert!((gaussian_cdf(10.0) - 1.0).abs() <= 1e-15);
        let oracle = phi_by_quadrature(1.2815515655);
        assert!((oracle - 0.9).abs() < 1e-9, "oracle {oracle}");
        assert!((gaussian_cdf(1.2815515655) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn cdf_plus_q_is_one() {
        for i in 0..1000 {
            let t = -10.0 + 20.0 * i as f64 / 999.0;
            assert!((gaussian_cdf(t) + gaussian_q(t) - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn q_inv_examples() {
        assert_eq!(gaussian_q_inv(0.5).unwrap(), 0.0);
        // bisection on the CDF as oracle
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gaussian_q(mid) > 0.1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = gaussian_q_inv(0.1).unwrap();
        assert!((t - lo).abs() < 1e-12);
        assert!((t - 1.2815515655).abs() < 1e-9);
        assert!(gaussian_q_inv(0.0).is_err());
        assert!(gaussian_q_inv(1.0).is_err());
        assert!(gaussian_q_inv(f64::NAN).is_err());
    }

    #[test]
    fn q_inv_round_trip_and_tails() {
        for i in 0..600 {
            let t = -5.99 + 11.98 * i as f64 / 599.0;
            let q = gaussian_q(t);
            let back = gaussian_q_inv(q).unwrap();
            // Q(t) near 1 carries an absolute rounding error of half an ulp,
            // which limits how well t can be recovered from it.
            let conditioning = 2.0 * f64::EPSILON * q / gaussian_pdf(t);
            assert!((back - t).abs() < 1e-9f64.max(conditioning), "t={t} back={back}");
        }
        for &eps in &[1e-300, 1e-100, 1e-20, 1e-5, 0.3, 0.9, 1.0 - 1e-12] {
            let t = gaussian_q_inv(eps).unwrap();
            let rel = (gaussian_q(t) - eps).abs() / eps.min(1.0 - eps).max(1e-300);
            assert!(rel < 1e-9, "eps={eps} t={t}");
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-15);
        // -0.2 ln 0.2 - 0.8 ln 0.8 = 0.500402423538188...
        assert!((binary_entropy(0.2) - 0.500_402_423_538_188_4).abs() < 1e-15);
    }

    #[test]
    fn binary_entropy_concave() {
        for i in 0..=50 {
            for j in 0..=50 {
                let (p, q) = (i as f64 / 50.0, j as f64 / 50.0);
                let mid = binary_entropy(0.5 * (p + q));
                assert!(mid + 1e-12 >= 0.5 * (binary_entropy(p) + binary_entropy(q)));
            }
        }
    }

    #[test]
    fn berry_esseen_examples() {
        let single = berry_esseen_bound(&[(0.0, 1.0, 1.0)]).unwrap();
        assert_eq!(single.bound, 6.0);

        // Bernoulli(1/2) centred: var 1/4, E|X - 1/2|^3 = 1/8.
        let n = 100;
        let terms = vec![(0.5, 0.25, 0.125); n];
        let be = berry_esseen_bound(&terms).unwrap();
        let expect = 6.0 * 0.125 / (0.25f64.powf(1.5) * (n as f64).sqrt());
        assert!((be.bound - expect).abs() < 1e-12);

        // Self-information of Bernoulli(0.11), moments computed by hand.
        let p: f64 = 0.11;
        let vals = [-(1.0 - p).ln(), -p.ln()];
        let probs = [1.0 - p, p];
        let mean: f64 = vals.iter().zip(&probs).map(|(v, w)| v * w).sum();
        let var: f64 = vals.iter().zip(&probs).map(|(v, w)| w * (v - mean).powi(2)).sum();
        let abs3: f64 = vals
            .iter()
            .zip(&probs)
            .map(|(v, w)| w * (v - mean).abs().powi(3))
            .sum();
        let n = 1000;
        let be = berry_esseen_bound(&vec![(mean, var, abs3); n]).unwrap();
        let hand = 6.0 * (n as f64 * abs3) / (n as f64 * var).powf(1.5);
        assert!((be.bound - hand).abs() < 1e-12);

        let degenerate = berry_esseen_bound(&[(1.0, 0.0, 0.5)]).unwrap();
        assert!(degenerate.bound.is_infinite());
        assert!(berry_esseen_bound(&[(0.0, -1.0, 0.0)]).is_err());
    }

    #[test]
    fn chi2_examples() {
        assert!((chi2_pdf(2, 0.0) - 0.5).abs() < 1e-15);
        assert!((chi2_pdf(2, 2.0) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(chi2_pdf(3, -1.0), 0.0);
        assert!(chi2_pdf(1_000_000, 1_000_000.0).is_finite());
        assert!(chi2_pdf(1_000_000, 1_000_000.0) > 0.0);
    }

    #[test]
    fn chi2_integrates_to_one() {
        for &k in &[1u64, 2, 5, 50, 1000] {
            let kf = k as f64;
            let hi = kf + 40.0 * (2.0 * kf).sqrt() + 60.0;
            let (total, _) = crate::quad::integrate(|x| chi2_pdf(k, x), 0.0, hi, 1e-12, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-6, "k={k} total={total}");
        }
        let (total, _) = crate::quad::integrate(|x| chi2_pdf(5, x), 0.0, 200.0, 1e-13, 1e-13).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chi2_tails_complement() {
        for &k in &[1u64, 7, 100] {
            for &x in &[0.5, 5.0, 90.0, 150.0] {
                assert!((chi2_cdf(k, x) + chi2_sf(k, x) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pow_one_minus() {
        let p: f64 = 0.3;
        let m: f64 = 7.0;
        assert!((one_minus_p_pow_m(p.ln(), m.ln()) - 0.7f64.powi(7)).abs() < 1e-15);
        assert_eq!(one_minus_p_pow_m(f64::NEG_INFINITY, 1e6), 1.0);
        assert_eq!(one_minus_p_pow_m(0.0, 0.0), 0.0);
        // M = e^120, p = e^-100: (1-p)^M = exp(-e^20) = 0
        assert_eq!(one_minus_p_pow_m(-100.0, 120.0), 0.0);
        // M p = e^-5
        let v = one_minus_p_pow_m(-300.0, 295.0);
        assert!((v - (-(-5.0f64).exp()).exp()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_basic() {
        assert!((log_sum_exp(&[0.0, 0.0]) - LN_2).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + LN_2)).abs() < 1e-12);
    }
}
