//! Adaptive Gauss-Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol · |I|)`. Returns `(integral, error_estimate)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    integrate_pieces(f, &[a, b], abs_tol, rel_tol)
}

/// Like [`integrate`] but starts from the given sorted breakpoints, which
/// lets callers seed the subdivision where the integrand is concentrated.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    if breaks.len() < 2 {
        return Ok((0.0, 0.0));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, err) = gk15(&f, w[0], w[1]);
        total += value;
        total_err += err;
        heap.push(Piece { a: w[0], b: w[1], value, err });
    }
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(total_err));
        }
        let worst = heap.pop().expect("heap is nonempty while error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::Quadrature(total_err));
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
    }
    // Recompute from the pieces to shed accumulated rounding from the updates.
    let (mut v, mut e) = (0.0, 0.0);
    for p in heap.iter() {
        v += p.value;
        e += p.err;
    }
    Ok((v, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_smooth() {
        let (v, _) = integrate(|x| x * x, 0.0, 3.0, 1e-14, 1e-14).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let (v, _) = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-13, 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let (v, _) = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13, 1e-13).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let w = 1e-3;
        let (v, _) = integrate(|x: f64| (-(x - 0.3).powi(2) / (2.0 * w * w)).exp(), 0.0, 1.0, 1e-14, 1e-12).unwrap();
        let exact = w * (2.0 * std::f64::consts::PI).sqrt();
        assert!((v - exact).abs() / exact < 1e-10);
    }
}
