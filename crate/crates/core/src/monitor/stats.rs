//! Nonparametric statistics backing the monitoring analyses: Wilson
//! score intervals for binomial proportions and the Mann-Whitney U test
//! with exact small-sample enumeration.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MonitorError;

/// z for a two-sided 95% interval.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `n` trials. The interval
/// always contains the point estimate and stays inside [0, 1].
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    assert!(n > 0, "wilson interval needs at least one trial");
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = ((center - spread) / denom).max(0.0);
    let high = ((center + spread) / denom).min(1.0);
    (low, high)
}

/// How the p-value for a U test was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    pub n1: usize,
    pub n2: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: MwuMethod,
}

/// Threshold on `n1 + n2` up to which the tie-free exact distribution is
/// enumerated; larger (or tied) samples use the tie-corrected normal
/// approximation with continuity correction.
pub const EXACT_LIMIT: usize = 16;

/// Two-sided Mann-Whitney U test from joint midranks.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, MonitorError> {
    if a.is_empty() || b.is_empty() {
        return Err(MonitorError::EmptySample);
    }
    let n1 = a.len();
    let n2 = b.len();
    let n = n1 + n2;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("no NaN in samples"));

    // Midranks plus the tie-correction term sum(t^3 - t).
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let run = (j - i) as f64;
        if j - i > 1 {
            has_ties = true;
            tie_term += run * run * run - run;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        for item in pooled.iter().take(j).skip(i) {
            if item.1 {
                rank_sum_a += midrank;
            }
        }
        i = j;
    }

    let u_a = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;
    let product = (n1 * n2) as f64;

    if n <= EXACT_LIMIT && !has_ties {
        let p_value = exact_two_sided_p(n1, n2, u_a.round() as u64);
        return Ok(MannWhitneyResult {
            u_statistic: u_a,
            n1,
            n2,
            p_value,
            method: MwuMethod::Exact,
        });
    }

    let mean = product / 2.0;
    let nf = n as f64;
    let variance = (product / 12.0) * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p_value = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u_a - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
    };
    Ok(MannWhitneyResult {
        u_statistic: u_a,
        n1,
        n2,
        p_value,
        method: MwuMethod::NormalApprox,
    })
}

/// Exact two-sided p under the null that all rank assignments are
/// equally likely: P(U <= u_low) + P(U >= n1*n2 - u_low), capped at 1.
fn exact_two_sided_p(n1: usize, n2: usize, u_a: u64) -> f64 {
    let counts = u_count_distribution(n1, n2);
    let total: u64 = counts.iter().sum();
    let max_u = (n1 * n2) as u64;
    let u_low = u_a.min(max_u - u_a);
    let u_high = max_u - u_low;
    let lower: u64 = counts.iter().take(u_low as usize + 1).sum();
    let upper: u64 = counts.iter().skip(u_high as usize).sum();
    ((lower + upper) as f64 / total as f64).min(1.0)
}

/// Number of n1-subsets of ranks {1..n1+n2} per U value, indexed by U.
/// Dynamic program over partial rank sums.
fn u_count_distribution(n1: usize, n2: usize) -> Vec<u64> {
    let n = n1 + n2;
    let max_sum = n * (n + 1) / 2;
    // f[k][s] = number of k-subsets of {1..r} with rank sum s.
    let mut f = vec![vec![0u64; max_sum + 1]; n1 + 1];
    f[0][0] = 1;
    for r in 1..=n {
        for k in (1..=n1.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                f[k][s] += f[k - 1][s - r];
            }
        }
    }
    let min_sum = n1 * (n1 + 1) / 2;
    let max_u = n1 * n2;
    (0..=max_u).map(|u| f[n1][min_sum + u]).collect()
}
