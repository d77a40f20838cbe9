//! Finite-alphabet joint sources `P_XS`, distortion matrices and sampling.
//!
//! Symbols are 0-based indices. Matrices are stored row-major: the joint pmf
//! as `pmf[x * s_size + s]`, the distortion as `d[x * y_size + y]`.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::chunk_rng;

/// Probabilities below this are structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-15;
/// Allowed deviation of the total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Joint law `P_XS` on a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSource {
    x_size: usize,
    s_size: usize,
    pmf: Vec<f64>,
    p_s: Vec<f64>,
    p_x: Vec<f64>,
}

impl JointSource {
    /// Builds a source from an `x_size × s_size` matrix of joint probabilities.
    pub fn new(pmf: &[Vec<f64>]) -> Result<Self> {
        let x_size = pmf.len();
        if x_size == 0 {
            return Err(Error::EmptyAlphabet("X"));
        }
        let s_size = pmf[0].len();
        if s_size == 0 {
            return Err(Error::EmptyAlphabet("S"));
        }
        let mut flat = Vec::with_capacity(x_size * s_size);
        for (row, r) in pmf.iter().enumerate() {
            if r.len() != s_size {
                return Err(Error::Shape(format!(
                    "pmf row {row} has {} entries, expected {s_size}",
                    r.len()
                )));
            }
            for (col, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
                if v < 0.0 {
                    return Err(Error::NegativeProbability { row, col, value: v });
                }
                flat.push(v);
            }
        }
        Self::from_flat(x_size, s_size, flat)
    }

    /// Builds a source from a row-major flat pmf.
    pub fn from_flat(x_size: usize, s_size: usize, mut pmf: Vec<f64>) -> Result<Self> {
        if x_size == 0 {
            return Err(Error::EmptyAlphabet("X"));
        }
        if s_size == 0 {
            return Err(Error::EmptyAlphabet("S"));
        }
        if pmf.len() != x_size * s_size {
            return Err(Error::Shape(format!(
                "pmf has {} entries, expected {}",
                pmf.len(),
                x_size * s_size
            )));
        }
        for (i, &v) in pmf.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i / s_size, col: i % s_size });
            }
            if v < 0.0 {
                return Err(Error::NegativeProbability { row: i / s_size, col: i % s_size, value: v });
            }
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::RowSum { sum });
        }
        for v in pmf.iter_mut() {
            if *v < STRUCTURAL_ZERO {
                *v = 0.0;
            }
        }
        let mut p_s = vec![0.0; s_size];
        let mut p_x = vec![0.0; x_size];
        for x in 0..x_size {
            for s in 0..s_size {
                let v = pmf[x * s_size + s];
                p_s[s] += v;
                p_x[x] += v;
            }
        }
        Ok(JointSource { x_size, s_size, pmf, p_s, p_x })
    }

    /// `P_XS(x, s) = P_S(s) · P_{X|S}(x|s)` from a side-information law and
    /// one conditional per side-information symbol (`cond[s][x]`).
    pub fn from_conditionals(p_s: &[f64], cond: &[Vec<f64>]) -> Result<Self> {
        if cond.len() != p_s.len() {
            return Err(Error::Shape("one conditional per side-information symbol".into()));
        }
        let x_size = cond.first().map(|c| c.len()).unwrap_or(0);
        let mut rows = vec![vec![0.0; p_s.len()]; x_size];
        for (s, c) in cond.iter().enumerate() {
            if c.len() != x_size {
                return Err(Error::Shape(format!("conditional {s} has the wrong length")));
            }
            for x in 0..x_size {
                rows[x][s] = p_s[s] * c[x];
            }
        }
        Self::new(&rows)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn s_size(&self) -> usize {
        self.s_size
    }

    #[inline]
    pub fn p(&self, x: usize, s: usize) -> f64 {
        self.pmf[x * self.s_size + s]
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn p_s(&self) -> &[f64] {
        &self.p_s
    }

    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }

    /// `P_{X|S}(·|s)`; `None` when `P_S(s) = 0`.
    pub fn conditional(&self, s: usize) -> Option<Vec<f64>> {
        let ps = self.p_s[s];
        if ps <= 0.0 {
            return None;
        }
        Some((0..self.x_size).map(|x| self.p(x, s) / ps).collect())
    }

    /// The same source with the side information collapsed to a single symbol.
    pub fn without_side_information(&self) -> JointSource {
        JointSource::from_flat(self.x_size, 1, self.p_x.clone())
            .expect("marginal of a valid source is valid")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.x_size)
            .map(|x| self.pmf[x * self.s_size..(x + 1) * self.s_size].to_vec())
            .collect()
    }
}

/// Per-letter distortion `d(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    x_size: usize,
    y_size: usize,
    d: Vec<f64>,
    d_max: f64,
}

impl DistortionSpec {
    pub fn new(d: &[Vec<f64>]) -> Result<Self> {
        let x_size = d.len();
        if x_size == 0 {
            return Err(Error::EmptyAlphabet("X"));
        }
        let y_size = d[0].len();
        if y_size == 0 {
            return Err(Error::EmptyAlphabet("Y"));
        }
        let mut flat = Vec::with_capacity(x_size * y_size);
        for (row, r) in d.iter().enumerate() {
            if r.len() != y_size {
                return Err(Error::Shape(format!(
                    "distortion row {row} has {} entries, expected {y_size}",
                    r.len()
                )));
            }
            for (col, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
                if v < 0.0 {
                    return Err(Error::NegativeDistortion { row, col, value: v });
                }
                flat.push(v);
            }
        }
        let d_max = flat.iter().cloned().fold(0.0, f64::max);
        Ok(DistortionSpec { x_size, y_size, d: flat, d_max })
    }

    /// Hamming distortion on a `k`-ary alphabet.
    pub fn hamming(k: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        DistortionSpec::new(&rows).expect("hamming matrix is valid")
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.d[x * self.y_size + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.d[x * self.y_size..(x + 1) * self.y_size]
    }

    /// Largest entry of the matrix (computed, never user supplied).
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// `min_y d(x, y)`.
    pub fn d_min_x(&self, x: usize) -> f64 {
        self.row(x).iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.x_size).map(|x| self.row(x).to_vec()).collect()
    }
}

/// A validated problem instance with cached marginals and distortion range.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub source: JointSource,
    pub dist: DistortionSpec,
    /// `E[min_y d(X, y)]`: no code can do better.
    pub d_floor: f64,
    /// Per-state floor `E[min_y d(X, y) | S = s]` (0 for null states).
    pub d_floor_s: Vec<f64>,
    /// Per-state zero-rate distortion `min_y E[d(X, y) | S = s]`.
    pub d_max_s: Vec<f64>,
    /// Smallest `D` with `R(X;D|S) = 0`.
    pub d_zero_rate: f64,
}

/// Checks that the source and distortion agree and caches the distortion range.
pub fn validate(source: JointSource, dist: DistortionSpec) -> Result<Instance> {
    if dist.x_size() != source.x_size() {
        return Err(Error::Shape(format!(
            "distortion has {} rows but the source alphabet has {} symbols",
            dist.x_size(),
            source.x_size()
        )));
    }
    let s_size = source.s_size();
    let mut d_floor_s = vec![0.0; s_size];
    let mut d_max_s = vec![0.0; s_size];
    for s in 0..s_size {
        let Some(px) = source.conditional(s) else { continue };
        d_floor_s[s] = px.iter().enumerate().map(|(x, p)| p * dist.d_min_x(x)).sum();
        d_max_s[s] = (0..dist.y_size())
            .map(|y| px.iter().enumerate().map(|(x, p)| p * dist.d(x, y)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
    }
    let p_s = source.p_s();
    let d_floor = (0..s_size).map(|s| p_s[s] * d_floor_s[s]).sum();
    let d_zero_rate = (0..s_size).map(|s| p_s[s] * d_max_s[s]).sum();
    Ok(Instance { source, dist, d_floor, d_floor_s, d_max_s, d_zero_rate })
}

impl Instance {
    pub fn x_size(&self) -> usize {
        self.source.x_size()
    }
    pub fn s_size(&self) -> usize {
        self.source.s_size()
    }
    pub fn y_size(&self) -> usize {
        self.dist.y_size()
    }

    /// Re-runs validation on the stored parts.
    pub fn revalidate(&self) -> Result<Instance> {
        validate(self.source.clone(), self.dist.clone())
    }
}

/// A sampled sequence of `(x, s)` symbol pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequencePair {
    pub xs: Vec<(usize, usize)>,
}

impl SequencePair {
    pub fn len(&self) -> usize {
        self.xs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
    pub fn x_seq(&self) -> Vec<usize> {
        self.xs.iter().map(|p| p.0).collect()
    }
    pub fn s_seq(&self) -> Vec<usize> {
        self.xs.iter().map(|p| p.1).collect()
    }
}

/// Categorical sampler over the flattened `(x, s)` cells of a joint source.
#[derive(Debug, Clone)]
pub struct PairSampler {
    s_size: usize,
    index: WeightedIndex<f64>,
}

impl PairSampler {
    pub fn new(source: &JointSource) -> Self {
        let index = WeightedIndex::new(source.pmf().iter().cloned())
            .expect("validated pmf has positive mass");
        PairSampler { s_size: source.s_size(), index }
    }

    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let k = self.index.sample(rng);
        (k / self.s_size, k % self.s_size)
    }
}

/// `n` i.i.d. draws from `P_XS`, reproducible from `seed`.
pub fn sample_iid(source: &JointSource, n: usize, seed: u64) -> SequencePair {
    let sampler = PairSampler::new(source);
    let mut rng = chunk_rng(seed, 0);
    SequencePair { xs: (0..n).map(|_| sampler.sample(&mut rng)).collect() }
}

/// As [`sample_iid`], but position `i` is drawn from stream `i / chunk`; the
/// output depends on `(seed, chunk)` only.
pub fn sample_iid_chunked(source: &JointSource, n: usize, seed: u64, chunk: usize) -> SequencePair {
    let chunk = chunk.max(1);
    let sampler = PairSampler::new(source);
    let xs = crate::mc::map_trials(seed, n.div_ceil(chunk), 1, |rng| {
        (0..chunk).map(|_| sampler.sample(rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .take(n)
    .collect();
    SequencePair { xs }
}

/// Mean per-letter distortion between two sequences.
pub fn sequence_distortion(x_seq: &[usize], y_seq: &[usize], dist: &DistortionSpec) -> Result<f64> {
    if x_seq.len() != y_seq.len() {
        return Err(Error::LengthMismatch { left: x_seq.len(), right: y_seq.len() });
    }
    if x_seq.is_empty() {
        return Err(Error::InvalidParameter("sequences must be nonempty".into()));
    }
    let mut total = 0.0;
    for (&x, &y) in x_seq.iter().zip(y_seq) {
        if x >= dist.x_size() || y >= dist.y_size() {
            return Err(Error::InvalidParameter(format!("symbol pair ({x}, {y}) out of range")));
        }
        total += dist.d(x, y);
    }
    Ok(total / x_seq.len() as f64)
}

/// On-disk model file.
///
/// ```json
/// {"x_size": 2, "s_size": 2, "y_size": 2,
///  "pmf": [[0.4, 0.4], [0.1, 0.1]],
///  "d": [[0, 1], [1, 0]],
///  "labels": {"x": ["0", "1"]}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub x_size: usize,
    pub s_size: usize,
    pub y_size: usize,
    pub pmf: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, Vec<String>>>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    /// Validates the declared sizes and the matrices into an [`Instance`].
    /// Matrix diagnostics name the offending `pmf`/`d` row and column.
    pub fn into_instance(self) -> Result<Instance> {
        if self.pmf.len() != self.x_size || self.pmf.iter().any(|r| r.len() != self.s_size) {
            return Err(Error::Shape(format!("pmf must be {} × {}", self.x_size, self.s_size)));
        }
        if self.d.len() != self.x_size || self.d.iter().any(|r| r.len() != self.y_size) {
            return Err(Error::Shape(format!("d must be {} × {}", self.x_size, self.y_size)));
        }
        let source = JointSource::new(&self.pmf)?;
        let dist = DistortionSpec::new(&self.d)?;
        validate(source, dist)
    }

    pub fn from_instance(inst: &Instance) -> Self {
        ModelFile {
            x_size: inst.x_size(),
            s_size: inst.s_size(),
            y_size: inst.y_size(),
            pmf: inst.source.to_rows(),
            d: inst.dist.to_rows(),
            labels: None,
        }
    }
}

/// The binary source with binary side information and Hamming distortion:
/// `P_S(1) = a`, `P_{X|S}(1|s) = c` for both `s`.
pub fn binary_example(a: f64, c: f64) -> Instance {
    let source = JointSource::from_conditionals(&[1.0 - a, a], &[vec![1.0 - c, c], vec![1.0 - c, c]])
        .expect("binary example parameters in (0, 1)");
    validate(source, DistortionSpec::hamming(2)).expect("shapes agree")
}

/// A random instance with alphabets of at most `max_size` symbols:
/// Dirichlet(1,…,1) joint law and distortions uniform on `[0, 1)`.
pub fn random_instance(seed: u64, max_size: usize) -> Instance {
    use rand::Rng;
    let mut rng = chunk_rng(seed, 0);
    let nx = rng.random_range(2..=max_size.max(2));
    let ns = rng.random_range(1..=max_size.max(1));
    let ny = rng.random_range(2..=max_size.max(2));
    let mut pmf: Vec<f64> = (0..nx * ns).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    let d: Vec<Vec<f64>> = (0..nx).map(|_| (0..ny).map(|_| rng.random::<f64>()).collect()).collect();
    let source = JointSource::from_flat(nx, ns, pmf).expect("normalized");
    validate(source, DistortionSpec::new(&d).expect("nonnegative")).expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_instance_is_valid() {
        let inst = binary_example(0.5, 0.2);
        assert_eq!(inst.d_floor, 0.0);
        assert!((inst.d_zero_rate - 0.2).abs() < 1e-15);
        assert_eq!(inst.revalidate().unwrap(), inst);
    }

    #[test]
    fn distinct_diagnostics() {
        assert!(matches!(
            JointSource::new(&[vec![0.5, 0.49]]),
            Err(Error::RowSum { .. })
        ));
        assert!(matches!(
            JointSource::new(&[vec![1.1, -0.1]]),
            Err(Error::NegativeProbability { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            DistortionSpec::new(&[vec![0.0, -0.1]]),
            Err(Error::NegativeDistortion { row: 0, col: 1, .. })
        ));
        assert!(matches!(JointSource::new(&[]), Err(Error::EmptyAlphabet("X"))));
        assert!(matches!(JointSource::new(&[vec![]]), Err(Error::EmptyAlphabet("S"))));
        assert!(matches!(DistortionSpec::new(&[vec![]]), Err(Error::EmptyAlphabet("Y"))));
    }

    #[test]
    fn structural_zeros_are_removed() {
        let src = JointSource::new(&[vec![0.5, 1e-17], vec![0.5 - 1e-17, 0.0]]).unwrap();
        assert_eq!(src.p(0, 1), 0.0);
        assert!(src.conditional(1).is_none());
    }

    #[test]
    fn marginals_are_consistent() {
        let src = JointSource::new(&[vec![0.1, 0.2, 0.05], vec![0.3, 0.15, 0.2]]).unwrap();
        for s in 0..3 {
            let sum: f64 = (0..2).map(|x| src.p(x, s)).sum();
            assert!((sum - src.p_s()[s]).abs() < 1e-14);
        }
        for x in 0..2 {
            let sum: f64 = (0..3).map(|s| src.p(x, s)).sum();
            assert!((sum - src.p_x()[x]).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_examples() {
        let atom = JointSource::new(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(sample_iid(&atom, 100, 1).xs.iter().all(|&p| p == (1, 0)));

        let inst = binary_example(0.3, 0.2);
        assert_eq!(sample_iid(&inst.source, 50, 9), sample_iid(&inst.source, 50, 9));
        assert_ne!(sample_iid(&inst.source, 50, 9), sample_iid(&inst.source, 50, 10));

        let n = 100_000;
        let seq = sample_iid(&inst.source, n, 3);
        let mut counts = [[0usize; 2]; 2];
        for &(x, s) in &seq.xs {
            counts[x][s] += 1;
        }
        for x in 0..2 {
            for s in 0..2 {
                let p = inst.source.p(x, s);
                let freq = counts[x][s] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se, "cell ({x},{s})");
            }
        }
    }

    #[test]
    fn chunked_sampling_matches_statistics() {
        let inst = binary_example(0.3, 0.2);
        let n = 60_000;
        let a = sample_iid_chunked(&inst.source, n, 4, 1000);
        assert_eq!(a, sample_iid_chunked(&inst.source, n, 4, 1000));
        let b = sample_iid(&inst.source, n, 4);
        let frac = |seq: &SequencePair| seq.xs.iter().filter(|p| p.0 == 1).count() as f64 / n as f64;
        let se = (0.2 * 0.8 / n as f64).sqrt();
        assert!((frac(&a) - frac(&b)).abs() < 4.0 * se * 2f64.sqrt());
    }

    #[test]
    fn distortion_of_sequences() {
        let h = DistortionSpec::hamming(2);
        assert_eq!(sequence_distortion(&[0, 1, 1], &[0, 1, 1], &h).unwrap(), 0.0);
        assert_eq!(sequence_distortion(&[0, 1, 1, 0], &[1, 1, 0, 0], &h).unwrap(), 0.5);
        assert!(sequence_distortion(&[0, 1], &[0], &h).is_err());

        let d = DistortionSpec::new(&[vec![0.3, 1.7, 0.2], vec![2.0, 0.0, 0.9]]).unwrap();
        let xs = [0, 1, 1, 0, 1, 0, 0];
        let ys = [2, 0, 1, 1, 2, 0, 2];
        let brute: f64 = xs.iter().zip(&ys).map(|(&x, &y)| d.to_rows()[x][y]).sum::<f64>() / 7.0;
        assert!((sequence_distortion(&xs, &ys, &d).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn model_file_diagnostics() {
        let err = ModelFile::parse("{\"x_size\": 2,\n \"s_size\": }").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"x_size":2,"s_size":1,"y_size":2,"pmf":[[0.5],[0.49]],"d":[[0,1],[1,0]]}"#;
        assert!(matches!(
            ModelFile::parse(text).unwrap().into_instance(),
            Err(Error::RowSum { .. })
        ));
        let inst = binary_example(0.4, 0.2);
        let file = ModelFile::from_instance(&inst);
        let back = ModelFile::parse(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(back.into_instance().unwrap(), inst);
    }
}
