//! Goodness-of-fit statistics: one-sample Kolmogorov-Smirnov and pooled
//! chi-square tests of Poisson increments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult<T> {
    pub statistic: T,
    pub p_value: T,
    pub n: usize,
}

/// Sup-distance between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic<T: Real>(sample: &[T], cdf: impl Fn(T) -> T) -> Result<T> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = T::of_u64(sorted.len() as u64);
    let mut d = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = T::of_u64(i as u64 + 1) / n - f;
        let below = f - T::of_u64(i as u64) / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf<T: Real>(lambda: T) -> T {
    if lambda <= T::zero() {
        return T::one();
    }
    let pi = T::PI();
    if lambda < T::of(1.18) {
        // CDF series sqrt(2 pi) / lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        let mut acc = T::zero();
        for k in 1..=40u64 {
            let odd = T::of_u64(2 * k - 1);
            acc = acc + (-(odd * odd) * pi * pi / (T::of(8.0) * lambda * lambda)).exp();
        }
        let cdf = (T::of(2.0) * pi).sqrt() / lambda * acc;
        (T::one() - cdf).max(T::zero()).min(T::one())
    } else {
        let mut acc = T::zero();
        for k in 1..=40u64 {
            let kk = T::of_u64(k);
            let term = (T::of(-2.0) * kk * kk * lambda * lambda).exp();
            acc = if k % 2 == 1 { acc + term } else { acc - term };
        }
        (T::of(2.0) * acc).max(T::zero()).min(T::one())
    }
}

/// KS test with the asymptotic p-value at `sqrt(n) * D`.
pub fn ks_test<T: Real>(sample: &[T], cdf: impl Fn(T) -> T) -> Result<KsResult<T>> {
    let d = ks_statistic(sample, cdf)?;
    let n = sample.len();
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(T::of_u64(n as u64).sqrt() * d), n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Pooled cells as `(first count, last count or None for an open tail, observed, expected)`.
    pub cells: Vec<(u64, Option<u64>, u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonIncrementReport {
    pub columns: Vec<ChiSquareResult>,
    pub observed_means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Pearson chi-square of observed counts against a Poisson law, pooling
/// adjacent cells until every expected frequency is at least 5.
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::DegenerateInput(format!("Poisson mean must be finite and non-negative, got {mean}")));
    }
    let reps = counts.len() as f64;
    let observed_max = counts.iter().copied().max().unwrap_or(0);
    let mean_max = (mean + 10.0 * mean.sqrt() + 10.0).ceil() as u64;
    let top = observed_max.max(mean_max);

    let mut freq = vec![0u64; top as usize + 1];
    for &c in counts {
        freq[c as usize] += 1;
    }
    let prob = |k: u64| -> f64 {
        if mean == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        let law = Poisson::new(mean).expect("positive mean");
        if k == top {
            1.0 - law.cdf(top - 1)
        } else {
            law.pmf(k)
        }
    };

    let mut cells: Vec<(u64, Option<u64>, u64, f64)> = Vec::new();
    let (mut start, mut obs, mut exp) = (0u64, 0u64, 0.0f64);
    for k in 0..=top {
        obs += freq[k as usize];
        exp += reps * prob(k);
        if exp >= 5.0 && k < top {
            cells.push((start, Some(k), obs, exp));
            start = k + 1;
            obs = 0;
            exp = 0.0;
        }
    }
    match cells.last_mut() {
        Some(last) if exp < 5.0 => {
            last.1 = None;
            last.2 += obs;
            last.3 += exp;
        }
        _ => cells.push((start, None, obs, exp)),
    }

    let statistic: f64 = cells
        .iter()
        .map(|&(_, _, o, e)| {
            if e > 0.0 {
                (o as f64 - e).powi(2) / e
            } else if o > 0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let df = cells.len() - 1;
    let p_value = if df == 0 {
        if statistic <= 1e-9 { 1.0 } else { 0.0 }
    } else {
        ChiSquared::new(df as f64).expect("positive df").sf(statistic)
    };
    Ok(ChiSquareResult { statistic, df, p_value, cells })
}

/// Tests each column of `counts` (one row per replication, one column per
/// interval) against `Poisson(means[j])`, and reports the sample covariance
/// matrix of the columns.
pub fn poisson_increment_test(counts: &[Vec<u64>], means: &[f64]) -> Result<PoissonIncrementReport> {
    if counts.is_empty() {
        return Err(Error::EmptySample);
    }
    let width = means.len();
    if width == 0 {
        return Err(Error::DegenerateInput("no intervals".into()));
    }
    if let Some(row) = counts.iter().find(|r| r.len() != width) {
        return Err(Error::DegenerateInput(format!(
            "row has {} increments, expected {width}",
            row.len()
        )));
    }
    let columns: Vec<Vec<u64>> = (0..width).map(|j| counts.iter().map(|r| r[j]).collect()).collect();
    let tests = columns
        .iter()
        .zip(means)
        .map(|(col, &m)| poisson_chi_square(col, m))
        .collect::<Result<Vec<_>>>()?;

    let reps = counts.len();
    let observed_means: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().map(|&c| c as f64).sum::<f64>() / reps as f64)
        .collect();
    let mut covariance = vec![vec![0.0; width]; width];
    if reps >= 2 {
        for j in 0..width {
            for k in j..width {
                let s: f64 = counts
                    .iter()
                    .map(|r| (r[j] as f64 - observed_means[j]) * (r[k] as f64 - observed_means[k]))
                    .sum();
                covariance[j][k] = s / (reps - 1) as f64;
                covariance[k][j] = covariance[j][k];
            }
        }
    }
    Ok(PoissonIncrementReport { columns: tests, observed_means, covariance })
}
