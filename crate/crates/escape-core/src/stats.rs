//! Medians, bootstrap confidence intervals, and the Wilcoxon signed-rank
//! test used by the experiment harness.
//!
//! The bootstrap is the plain percentile kind (2.5% / 97.5% of resampled
//! medians, nearest-rank): simplest reproducible choice. The Wilcoxon test
//! drops zero differences, uses the exact signed-rank null by enumeration
//! up to n = 20, and a normal approximation with continuity correction and
//! tie variance correction above.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{self, Write};

use crate::error::{ParamError, StatsError};

/// Default bootstrap resample count.
pub const DEFAULT_RESAMPLES: u64 = 10_000;

/// Median with a 95% percentile-bootstrap confidence interval.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsSummary {
    /// Sample count.
    pub n: usize,
    /// Sample median (mean of the two central order statistics for even n).
    pub median: f64,
    /// 2.5% bootstrap percentile.
    pub ci_low: f64,
    /// 97.5% bootstrap percentile.
    pub ci_high: f64,
    /// Resamples used.
    pub resamples: u64,
}

impl StatsSummary {
    /// `median,ci_low,ci_high,n` rendered for a CSV cell group.
    pub fn write_csv_fields<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "{},{},{},{}", self.median, self.ci_low, self.ci_high, self.n)
    }
}

/// Sample median; errors on an empty slice.
pub fn median(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(median_of_sorted(&sorted))
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile of an ascending-sorted slice, `p` in [0, 100].
fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap of the median: `resamples` with-replacement
/// resamples of the full sample, 95% interval from the 2.5% and 97.5%
/// nearest-rank percentiles of the resampled medians. Deterministic given
/// `(samples, resamples, seed)`.
pub fn bootstrap_median_ci(
    samples: &[f64],
    resamples: u64,
    seed: u64,
) -> Result<StatsSummary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    if resamples == 0 {
        return Err(ParamError::invalid("resamples", "must be ≥ 1".to_string()).into());
    }
    let n = samples.len();
    let point_median = median(samples)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample = vec![0.0; n];
    let mut medians = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        for slot in resample.iter_mut() {
            *slot = samples[rng.random_range(0..n)];
        }
        resample.sort_unstable_by(f64::total_cmp);
        medians.push(median_of_sorted(&resample));
    }
    medians.sort_unstable_by(f64::total_cmp);

    Ok(StatsSummary {
        n,
        median: point_median,
        ci_low: percentile_nearest_rank(&medians, 2.5),
        ci_high: percentile_nearest_rank(&medians, 97.5),
        resamples,
    })
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped (the test's original convention); at least
/// 5 nonzero differences are required. Ties in `|d|` get midranks. Returns
/// the two-sided p-value: exact by enumeration of the signed-rank null for
/// n ≤ 20, normal approximation (tie-corrected variance, continuity
/// correction) above.
pub fn wilcoxon_signed_rank(paired_diffs: &[f64]) -> Result<f64, StatsError> {
    if paired_diffs.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let nonzero: Vec<f64> = paired_diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    if nonzero.len() < 5 {
        return Err(StatsError::TooFewSamples {
            needed: 5,
            got: nonzero.len(),
        });
    }
    assert!(
        nonzero.iter().all(|d| d.is_finite()),
        "paired differences must be finite"
    );

    let n = nonzero.len();
    // Midranks of |d|, doubled so ties (.5 ranks) stay integral for the
    // exact enumeration.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| nonzero[a].abs().total_cmp(&nonzero[b].abs()));
    let mut doubled_ranks = vec![0_u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // Positions i..=j (0-based) tie: midrank = (i+1 + j+1)/2, doubled.
        let doubled_midrank = (i as u64 + 1) + (j as u64 + 1);
        for &idx in &order[i..=j] {
            doubled_ranks[idx] = doubled_midrank;
        }
        tie_sizes.push((j - i + 1) as u64);
        i = j + 1;
    }

    let w2_plus: u64 = nonzero
        .iter()
        .zip(&doubled_ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r2)| *r2)
        .sum();

    let p = if n <= 20 {
        exact_two_sided_p(w2_plus, &doubled_ranks)
    } else {
        normal_two_sided_p(w2_plus, n as u64, &tie_sizes)
    };
    Ok(p.min(1.0))
}

/// Exact two-sided p by enumerating the signed-rank null: each rank joins
/// W⁺ independently with probability ½. Works on doubled ranks so midranks
/// stay integral.
fn exact_two_sided_p(w2: u64, doubled_ranks: &[u64]) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    // counts[s] = number of sign assignments with doubled statistic s.
    let mut counts = vec![0.0_f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0_usize;
    for &r2 in doubled_ranks {
        let r2 = r2 as usize;
        reach += r2;
        for s in (r2..=reach).rev() {
            counts[s] += counts[s - r2];
        }
    }
    let denom = 2.0_f64.powi(doubled_ranks.len() as i32);
    let below: f64 = counts[..=w2 as usize].iter().sum();
    let above: f64 = counts[w2 as usize..].iter().sum();
    2.0 * (below.min(above)) / denom
}

/// Normal approximation with continuity correction; `tie_sizes` feed the
/// variance correction Σ(t³ − t)/48.
fn normal_two_sided_p(w2: u64, n: u64, tie_sizes: &[u64]) -> f64 {
    let w = w2 as f64 / 2.0;
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_correction: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let tf = t as f64;
            (tf * tf * tf - tf) / 48.0
        })
        .sum();
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_correction;
    if variance <= 0.0 {
        return 1.0;
    }
    let centered = w - mean;
    // Continuity correction: shrink the statistic half a step toward the
    // null mean before standardizing.
    let corrected = if centered > 0.0 {
        centered - 0.5
    } else if centered < 0.0 {
        centered + 0.5
    } else {
        0.0
    };
    let z = corrected / variance.sqrt();
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}
