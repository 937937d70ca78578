//! Per-setting aggregation of multi-seed scores: mean, sample standard
//! deviation, and the five-number summary driving the boxplots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample (n-1) standard deviation; 0 for a single run.
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// True when only one run backs the summary, so sd is not meaningful.
    pub degenerate: bool,
}

/// Linear-interpolation quantile over sorted values (the rank statistic at
/// (n-1)p, interpolated between neighbors).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Empty("no scores to summarize".to_string()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("non-finite score in summary"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        n,
        mean,
        sd,
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[n - 1],
        degenerate: n < 2,
    })
}
