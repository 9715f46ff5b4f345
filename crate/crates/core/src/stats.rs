//! Goodness-of-fit statistics and chain diagnostics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Fewest samples accepted by [`ks_distance`].
pub const MIN_KS_SAMPLES: usize = 100;

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and a continuous CDF.
/// Ties are handled exactly (the empirical CDF jumps by the tie count).
pub fn ks_distance(samples: &[f64], mut cdf: impl FnMut(f64) -> f64) -> Result<f64> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::Invalid(format!("KS distance needs at least {MIN_KS_SAMPLES} samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Invalid("NaN sample".into()));
    }
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((i as f64 / n - f).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(d)
}

/// Kolmogorov-Smirnov distance between a discrete law given as `(point, mass)` atoms sorted
/// by point and a continuous CDF.
pub fn ks_distance_discrete(atoms: &[(f64, f64)], mut cdf: impl FnMut(f64) -> f64) -> f64 {
    let mut below = 0.0;
    let mut d: f64 = 0.0;
    for &(x, q) in atoms {
        let f = cdf(x);
        let above = below + q;
        d = d.max((below - f).abs()).max((above - f).abs());
        below = above;
    }
    d
}

/// Pearson chi-square test result after cell merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells after merging.
    pub cells: usize,
}

/// Chi-square test of `observed` counts against cell probabilities `expected` (summing to
/// at most 1; any missing mass is ignored). Cells are merged, smallest expectation first,
/// until each merged cell expects at least `min_expected` counts. An observation in a
/// cell of zero probability gives an infinite statistic.
pub fn chi_square(observed: &[u64], expected: &[f64], min_expected: f64) -> Result<ChiSquare> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Invalid("observed and expected cells must have the same nonzero length".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Invalid("no observations".into()));
    }
    let norm: f64 = expected.iter().sum();
    if !(norm > 0.0) || expected.iter().any(|&p| p < 0.0 || p.is_nan()) {
        return Err(Error::Invalid("expected probabilities must be non-negative with positive sum".into()));
    }
    let nf = total as f64;
    if observed.iter().zip(expected).any(|(&o, &p)| o > 0 && p == 0.0) {
        return Ok(ChiSquare { statistic: f64::INFINITY, dof: observed.len().saturating_sub(1), p_value: 0.0, cells: observed.len() });
    }
    let mut cells: Vec<(f64, f64)> = observed.iter().zip(expected).map(|(&o, &p)| (nf * p / norm, o as f64)).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (e, o) in cells {
        acc.0 += e;
        acc.1 += o;
        if acc.0 >= min_expected {
            merged.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => merged.push(acc),
        }
    }
    let statistic: f64 = merged.iter().filter(|c| c.0 > 0.0).map(|&(e, o)| (o - e) * (o - e) / e).sum();
    let dof = merged.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).map_err(|e| Error::Invalid(e.to_string()))?
    };
    Ok(ChiSquare { statistic, dof, p_value, cells: merged.len() })
}

/// Integrated autocorrelation time `1 + 2 sum_t rho(t)` with the self-consistent window
/// `M >= 5 tau(M)`.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pass thresholds of a [`ComparisonReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ks: f64,
    pub p_value: f64,
    pub moment_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ks: 0.03, p_value: 0.01, moment_relative: 0.02 }
    }
}

/// Relative error of one empirical moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentError {
    pub name: String,
    pub empirical: f64,
    pub target: f64,
    pub relative_error: f64,
}

impl MomentError {
    pub fn new(name: impl Into<String>, empirical: f64, target: f64) -> Self {
        let relative_error = (empirical - target).abs() / target.abs().max(f64::MIN_POSITIVE);
        Self { name: name.into(), empirical, target, relative_error }
    }
}

/// Outcome of comparing samples with a reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ks: Option<f64>,
    pub chi_square: Option<ChiSquare>,
    pub moments: Vec<MomentError>,
    pub tolerances: Tolerances,
    pub passed: bool,
}

impl ComparisonReport {
    /// Evaluates every available statistic against `tolerances`.
    pub fn new(ks: Option<f64>, chi_square: Option<ChiSquare>, moments: Vec<MomentError>, tolerances: Tolerances) -> Self {
        let passed = ks.is_none_or(|d| d <= tolerances.ks)
            && chi_square.as_ref().is_none_or(|c| c.p_value > tolerances.p_value)
            && moments.iter().all(|m| m.relative_error <= tolerances.moment_relative);
        Self { ks, chi_square, moments, tolerances, passed }
    }
}
