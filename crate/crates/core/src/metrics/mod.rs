//! Caption-quality scoring and the statistics used to compare settings:
//! CIDEr-D (the computable half of SPIDEr), one-sided Wilcoxon signed-rank
//! tests, and per-setting score aggregation.

pub mod cider;
pub mod summary;
pub mod wilcoxon;

pub use cider::{cider_d, CorpusDf};
pub use summary::{summarize, SummaryStats};
pub use wilcoxon::{wilcoxon_one_sided, PMethod, SignificanceResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for a metric this artifact deliberately does not compute: SPICE
/// needs a semantic scene-graph parser, so SPIDEr (the mean of CIDEr and
/// SPICE) cannot be assembled either. Serializes as null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NotComputed;

impl Serialize for NotComputed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_none()
    }
}

impl<'de> Deserialize<'de> for NotComputed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Option<serde::de::IgnoredAny> = Option::deserialize(d)?;
        match v {
            None => Ok(NotComputed),
            Some(_) => Err(serde::de::Error::custom("expected null for an uncomputed metric")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub clip_id: String,
    pub cider_d: f64,
}

/// One run's evaluation: per-clip CIDEr-D scores and their corpus mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub setting_id: String,
    pub seed: u64,
    pub per_example: Vec<ExampleScore>,
    pub corpus_cider_d: f64,
    pub spice: NotComputed,
    pub spider: NotComputed,
}

impl ScoreReport {
    pub fn new(setting_id: String, seed: u64, per_example: Vec<ExampleScore>) -> Result<Self> {
        if per_example.is_empty() {
            return Err(Error::Empty("score report without examples".to_string()));
        }
        for e in &per_example {
            if !(0.0..=10.0).contains(&e.cider_d) {
                return Err(Error::config(format!(
                    "clip {}: CIDEr-D {} outside [0, 10]",
                    e.clip_id, e.cider_d
                )));
            }
        }
        let corpus_cider_d =
            per_example.iter().map(|e| e.cider_d).sum::<f64>() / per_example.len() as f64;
        Ok(ScoreReport {
            setting_id,
            seed,
            per_example,
            corpus_cider_d,
            spice: NotComputed,
            spider: NotComputed,
        })
    }
}
