//! CIDEr-D: consensus-based caption scoring.
//!
//! TF-IDF weighted n-gram cosine similarity for n = 1..4 with reference
//! count clipping and a Gaussian length penalty (sigma = 6), scaled by 10
//! and averaged over n and over references. Document frequencies come from
//! the evaluation corpus's own reference sets; the IDF log is floored via
//! max(1, df). Scores live in [0, 10].

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const MAX_NGRAM: usize = 4;
pub const LENGTH_SIGMA: f64 = 6.0;

type Ngram = Vec<String>;

fn ngram_counts(tokens: &[String]) -> [BTreeMap<Ngram, usize>; MAX_NGRAM] {
    let mut counts: [BTreeMap<Ngram, usize>; MAX_NGRAM] = Default::default();
    for n in 1..=MAX_NGRAM {
        if tokens.len() < n {
            break;
        }
        for window in tokens.windows(n) {
            *counts[n - 1].entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// N-gram document frequencies over an evaluation corpus: for each n-gram,
/// the number of clips whose reference set contains it.
#[derive(Debug, Clone, Default)]
pub struct CorpusDf {
    num_clips: usize,
    df: BTreeMap<Ngram, usize>,
}

impl CorpusDf {
    /// One entry per clip: that clip's full set of reference token
    /// sequences.
    pub fn build(reference_sets: &[Vec<Vec<String>>]) -> Self {
        let mut df = BTreeMap::new();
        for refs in reference_sets {
            let mut seen: BTreeMap<Ngram, ()> = BTreeMap::new();
            for r in refs {
                for level in ngram_counts(r) {
                    for gram in level.into_keys() {
                        seen.entry(gram).or_insert(());
                    }
                }
            }
            for (gram, ()) in seen {
                *df.entry(gram).or_insert(0) += 1;
            }
        }
        CorpusDf { num_clips: reference_sets.len(), df }
    }

    pub fn num_clips(&self) -> usize {
        self.num_clips
    }

    fn idf(&self, gram: &Ngram) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1) as f64;
        (self.num_clips as f64 / df).ln()
    }
}

struct TfIdfVec {
    weights: [BTreeMap<Ngram, f64>; MAX_NGRAM],
    norms: [f64; MAX_NGRAM],
    length: usize,
}

fn tfidf(tokens: &[String], df: &CorpusDf) -> TfIdfVec {
    let mut weights: [BTreeMap<Ngram, f64>; MAX_NGRAM] = Default::default();
    let mut norms = [0.0; MAX_NGRAM];
    for (n, level) in ngram_counts(tokens).into_iter().enumerate() {
        for (gram, count) in level {
            let w = count as f64 * df.idf(&gram);
            norms[n] += w * w;
            weights[n].insert(gram, w);
        }
    }
    for norm in &mut norms {
        *norm = norm.sqrt();
    }
    TfIdfVec { weights, norms, length: tokens.len() }
}

/// CIDEr-D of one candidate against one clip's references. Deterministic
/// and invariant under reference reordering (per-reference contributions
/// are summed in sorted order). An empty candidate scores 0; an empty
/// reference list is an error.
pub fn cider_d(candidate: &[String], references: &[Vec<String>], df: &CorpusDf) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Empty("reference list".to_string()));
    }
    if df.num_clips == 0 {
        return Err(Error::Empty("corpus document frequencies".to_string()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let cand = tfidf(candidate, df);
    let mut per_n_contributions: [Vec<f64>; MAX_NGRAM] = Default::default();
    for reference in references {
        let refv = tfidf(reference, df);
        let delta = cand.length as f64 - refv.length as f64;
        let penalty = (-(delta * delta) / (2.0 * LENGTH_SIGMA * LENGTH_SIGMA)).exp();
        for n in 0..MAX_NGRAM {
            let mut dot = 0.0;
            for (gram, &cw) in &cand.weights[n] {
                if let Some(&rw) = refv.weights[n].get(gram) {
                    dot += cw.min(rw) * rw;
                }
            }
            // The clipped dot product never exceeds ||c|| ||r||, so values
            // above 1 are pure rounding; clamp to keep scores inside [0, 10].
            let val = if cand.norms[n] > 0.0 && refv.norms[n] > 0.0 {
                (dot / (cand.norms[n] * refv.norms[n])).min(1.0)
            } else {
                0.0
            };
            per_n_contributions[n].push(penalty * val);
        }
    }
    let m = references.len() as f64;
    let mut total = 0.0;
    for contributions in &mut per_n_contributions {
        contributions.sort_by(f64::total_cmp);
        total += contributions.iter().sum::<f64>() / m;
    }
    Ok(10.0 * total / MAX_NGRAM as f64)
}
