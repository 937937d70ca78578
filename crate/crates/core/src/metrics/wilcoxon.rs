//! One-sided Wilcoxon signed-rank test (alternative: positive median
//! difference).
//!
//! Zero differences are dropped, tied magnitudes share mid-ranks. Up to 20
//! effective pairs the p-value is exact over all 2^n sign assignments
//! (computed by a rank-sum convolution); beyond that a normal approximation
//! with tie-corrected variance is used, without continuity correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    NormalApprox,
}

impl PMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PMethod::Exact => "exact",
            PMethod::NormalApprox => "normal_approx",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// Sum of the ranks of positive differences.
    pub w_statistic: f64,
    /// Pairs remaining after zero removal.
    pub n_effective: usize,
    pub p_one_sided: f64,
    pub method: PMethod,
}

/// Mid-ranks of |d|, scaled by 2 so ties stay integral.
fn double_ranks(magnitudes: &[f64]) -> Vec<u64> {
    let n = magnitudes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| magnitudes[a].total_cmp(&magnitudes[b]));
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mid-rank ((i+1)+(j+1))/2.
        let rank2 = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            ranks2[idx] = rank2;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact P(W+ >= observed) by convolving the subset-sum distribution of the
/// doubled ranks.
fn exact_p(ranks2: &[u64], w2_observed: u64) -> f64 {
    let total: usize = ranks2.iter().sum::<u64>() as usize;
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in ranks2 {
        let r = r as usize;
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let favorable: u64 = counts[w2_observed as usize..].iter().sum();
    favorable as f64 / (1u64 << ranks2.len()) as f64
}

pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<SignificanceResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::config("wilcoxon: non-finite difference"));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Empty("all paired differences are zero".to_string()));
    }
    let n = nonzero.len();
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks2 = double_ranks(&magnitudes);
    let w2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let w_statistic = w2 as f64 / 2.0;

    let (p, method) = if n <= EXACT_LIMIT {
        (exact_p(&ranks2, w2), PMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction: sum of (t^3 - t) over groups of tied magnitudes.
        let mut tie_term = 0.0;
        let mut sorted = magnitudes.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_statistic - mean) / variance.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        ((1.0 - normal.cdf(z)).max(f64::MIN_POSITIVE), PMethod::NormalApprox)
    };

    Ok(SignificanceResult { w_statistic, n_effective: n, p_one_sided: p, method })
}
