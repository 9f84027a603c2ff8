//! Split-vector laws.
//!
//! Three laws ship: `(U, 1 - U)` for binary search trees, the degenerate
//! `(1/b, ..., 1/b)` of tries, and a fixed multiset of probabilities placed in
//! uniformly random order. Together they cover the non-lattice case, the
//! degenerate lattice case and a non-trivial lattice case. New laws plug in as
//! further variants of [`SplitVectorSpec`]; `entropy_mu` falls back to Monte
//! Carlo for any law without a closed form.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Absolute tolerance on `sum(V) = 1`.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Tolerance used when reducing `-ln v` values to a common span.
pub const LATTICE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitVectorKind {
    UniformBinary,
    DeterministicUniform,
    FixedMultiset,
}

impl SplitVectorKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitVectorKind::UniformBinary => "uniform-binary",
            SplitVectorKind::DeterministicUniform => "deterministic-uniform",
            SplitVectorKind::FixedMultiset => "fixed-multiset",
        }
    }
}

impl std::str::FromStr for SplitVectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "uniform-binary" => Ok(SplitVectorKind::UniformBinary),
            "deterministic-uniform" => Ok(SplitVectorKind::DeterministicUniform),
            "fixed-multiset" => Ok(SplitVectorKind::FixedMultiset),
            other => Err(invalid(format!("unknown split-vector kind `{other}`"))),
        }
    }
}

impl fmt::Display for SplitVectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Law of the random split vector `(V_1, ..., V_b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitVectorSpec {
    UniformBinary,
    DeterministicUniform { b: usize },
    FixedMultiset { probs: Vec<f64> },
}

impl SplitVectorSpec {
    pub fn uniform_binary() -> Self {
        SplitVectorSpec::UniformBinary
    }

    pub fn deterministic_uniform(b: usize) -> Result<Self> {
        if b < 2 {
            return Err(invalid(format!("branch factor must be at least 2, got {b}")));
        }
        Ok(SplitVectorSpec::DeterministicUniform { b })
    }

    pub fn fixed_multiset(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(invalid(format!(
                "multiset needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid(format!("multiset entries must lie in (0, 1], got {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("multiset sums to {sum}, not 1")));
        }
        Ok(SplitVectorSpec::FixedMultiset { probs })
    }

    /// Builds a split-vector description from its config-block fields.
    pub fn from_parts(kind: SplitVectorKind, b: Option<usize>, multiset: Option<&[f64]>) -> Result<Self> {
        let spec = match kind {
            SplitVectorKind::UniformBinary => {
                if let Some(b) = b.filter(|&b| b != 2) {
                    return Err(invalid(format!("uniform-binary requires b = 2, got {b}")));
                }
                SplitVectorSpec::UniformBinary
            }
            SplitVectorKind::DeterministicUniform => {
                let b = b.ok_or_else(|| invalid("deterministic-uniform needs b"))?;
                SplitVectorSpec::deterministic_uniform(b)?
            }
            SplitVectorKind::FixedMultiset => {
                let probs = multiset.ok_or_else(|| invalid("fixed-multiset needs a multiset"))?;
                if let Some(b) = b.filter(|&b| b != probs.len()) {
                    return Err(invalid(format!(
                        "b = {b} but the multiset has {} entries",
                        probs.len()
                    )));
                }
                SplitVectorSpec::fixed_multiset(probs.to_vec())?
            }
        };
        Ok(spec)
    }

    pub fn kind(&self) -> SplitVectorKind {
        match self {
            SplitVectorSpec::UniformBinary => SplitVectorKind::UniformBinary,
            SplitVectorSpec::DeterministicUniform { .. } => SplitVectorKind::DeterministicUniform,
            SplitVectorSpec::FixedMultiset { .. } => SplitVectorKind::FixedMultiset,
        }
    }

    pub fn branch_factor(&self) -> usize {
        match self {
            SplitVectorSpec::UniformBinary => 2,
            SplitVectorSpec::DeterministicUniform { b } => *b,
            SplitVectorSpec::FixedMultiset { probs } => probs.len(),
        }
    }

    pub fn multiset(&self) -> Option<&[f64]> {
        match self {
            SplitVectorSpec::FixedMultiset { probs } => Some(probs),
            _ => None,
        }
    }

    /// Writes one split vector into `out` (length `b`).
    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.branch_factor());
        match self {
            SplitVectorSpec::UniformBinary => {
                let u: f64 = rng.random();
                out[0] = u;
                out[1] = 1.0 - u;
            }
            SplitVectorSpec::DeterministicUniform { b } => out.fill(1.0 / *b as f64),
            SplitVectorSpec::FixedMultiset { probs } => {
                out.copy_from_slice(probs);
                out.shuffle(rng);
            }
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> SplitVector {
        let mut probs = vec![0.0; self.branch_factor()];
        self.sample_into(rng, &mut probs);
        SplitVector(probs)
    }

    /// `mu = b E[-V_1 ln V_1]` in closed form.
    pub fn mu<T: Real>(&self) -> Result<T> {
        match self {
            SplitVectorSpec::UniformBinary => Ok(T::of(0.5)),
            SplitVectorSpec::DeterministicUniform { b } => Ok(T::of_u64(*b as u64).ln()),
            // Exchangeable placement makes V_1 uniform over the multiset entries,
            // so b E[-V_1 ln V_1] is the plain entropy of the multiset.
            SplitVectorSpec::FixedMultiset { probs } => Ok(probs
                .iter()
                .map(|&p| {
                    let p = T::of(p);
                    -p * p.ln()
                })
                .fold(T::zero(), |acc, x| acc + x)),
        }
    }

    /// Span `a` of the lattice carrying `-ln V_1`, or `None` when non-lattice.
    pub fn lattice_span(&self) -> Option<f64> {
        match self {
            SplitVectorSpec::UniformBinary => None,
            SplitVectorSpec::DeterministicUniform { b } => Some((*b as f64).ln()),
            SplitVectorSpec::FixedMultiset { probs } => {
                let logs: Vec<f64> = probs.iter().map(|p| -p.ln()).collect();
                common_span(&logs, LATTICE_TOLERANCE)
            }
        }
    }
}

/// Largest `a > 0` with every value in `a Z` (within `tol`), if one exists.
///
/// Euclid's algorithm on reals with a tolerance on the remainder, followed by
/// a check that every value is an integer multiple of the candidate.
pub(crate) fn common_span(values: &[f64], tol: f64) -> Option<f64> {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > tol).collect();
    let scale = positive.iter().copied().fold(0.0, f64::max);
    if positive.is_empty() {
        return None;
    }
    let abs_tol = tol * scale.max(1.0);
    let mut span = positive[0];
    for &v in &positive[1..] {
        let (mut x, mut y) = if v > span { (v, span) } else { (span, v) };
        let mut steps = 0;
        while y > abs_tol && steps < 200 {
            let mut r = x % y;
            if y - r <= abs_tol {
                r = 0.0;
            }
            x = y;
            y = r;
            steps += 1;
        }
        span = x;
        if span <= abs_tol * 1e3 {
            return None;
        }
    }
    let multiple_of = |v: f64| {
        let k = (v / span).round();
        k >= 1.0 && (v - k * span).abs() <= tol * v.max(1.0)
    };
    positive.iter().all(|&v| multiple_of(v)).then_some(span)
}

/// One realisation of the split vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitVector(Vec<f64>);

impl SplitVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Result of [`entropy_mu`]: a value and its standard error (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// `mu` in closed form when `mc_samples == 0`, otherwise a Monte Carlo estimate
/// of `b E[-V_1 ln V_1]` from `mc_samples` draws of `V_1`.
pub fn entropy_mu(spec: &SplitVectorSpec, mc_samples: u64, rng: &mut RandomStream) -> Result<MuEstimate> {
    if mc_samples == 0 {
        let value = spec.mu::<f64>()?;
        return Ok(MuEstimate { value, std_error: 0.0, samples: 0 });
    }
    let b = spec.branch_factor();
    let mut buf = vec![0.0; b];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..mc_samples {
        spec.sample_into(rng, &mut buf);
        let v = buf[0];
        let x = if v > 0.0 { -(b as f64) * v * v.ln() } else { 0.0 };
        sum += x;
        sum_sq += x * x;
    }
    let m = mc_samples as f64;
    let mean = sum / m;
    let var = if mc_samples > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MuEstimate { value: mean, std_error: (var / m).sqrt(), samples: mc_samples })
}

/// Parses a probability written as a decimal (`0.125`) or a fraction (`1/8`).
pub fn parse_probability(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| invalid(format!("bad fraction `{s}`")))?;
            let den: f64 = den.trim().parse().map_err(|_| invalid(format!("bad fraction `{s}`")))?;
            if den == 0.0 {
                return Err(invalid(format!("zero denominator in `{s}`")));
            }
            num / den
        }
        None => s.parse().map_err(|_| invalid(format!("bad probability `{s}`")))?,
    };
    Ok(value)
}

/// Parses a comma-separated multiset such as `1/2,1/4,1/8,1/8`.
pub fn parse_multiset(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_probability).collect()
}
