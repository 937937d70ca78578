//! Multi-run execution: a worker pool over (setting, seed) pairs, score
//! aggregation per setting, and paired Wilcoxon contrasts.
//!
//! Runs are fully independent, so results are identical for any worker
//! count: outputs are sorted by (setting id, seed) before anything is
//! written or compared.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::captions::Split;
use crate::data::DataDir;
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, SettingId};
use crate::experiment::evaluate::{evaluate_model, EvalContext};
use crate::experiment::train::{run_training, TrainingOutput};
use crate::metrics::summary::{summarize, SummaryStats};
use crate::metrics::wilcoxon::{wilcoxon_one_sided, SignificanceResult};
use crate::metrics::ScoreReport;
use crate::model::sequence::Overlap;
use crate::model::table::WordSource;

/// Paired comparisons the suite can emit, mirroring the claims the
/// statistics back: extraction overlap per encoder, and fine-tuned versus
/// fixed word embeddings per source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    Overlap,
    FineTune,
}

impl Contrast {
    pub fn name(&self) -> &'static str {
        match self {
            Contrast::Overlap => "overlap_half_vs_none",
            Contrast::FineTune => "fine_tuned_vs_fixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(Contrast::Overlap),
            "fine_tune" => Ok(Contrast::FineTune),
            other => Err(Error::config(format!(
                "unknown contrast {other:?} (expected overlap or fine_tune)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunFailure {
    pub setting_id: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SignificanceRow {
    pub contrast: &'static str,
    pub group: String,
    pub result: SignificanceResult,
}

pub struct SuiteOptions {
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub contrasts: Vec<Contrast>,
}

pub struct SuiteResult {
    pub reports: Vec<ScoreReport>,
    pub failures: Vec<RunFailure>,
    pub summaries: Vec<(String, SummaryStats)>,
    pub significance: Vec<SignificanceRow>,
}

/// Trains one configuration and evaluates its best checkpoint on the
/// evaluation split.
pub fn run_full(cfg: &ExperimentConfig, data: &DataDir) -> Result<(ScoreReport, TrainingOutput)> {
    let output = run_training(cfg, data)?;
    let eval = data.load_split(Split::Evaluation)?;
    let store = data.store();
    let report = evaluate_model(
        &output.best_model,
        &output.vocab,
        &eval,
        &EvalContext {
            store: &store,
            encoder: cfg.encoder_id,
            overlap: cfg.overlap,
            setting_id: cfg.setting_id().to_string(),
            seed: cfg.seed,
        },
    )?;
    Ok((report, output))
}

pub fn run_suite(
    grid: &[ExperimentConfig],
    data: &DataDir,
    opts: &SuiteOptions,
) -> Result<SuiteResult> {
    if grid.is_empty() {
        return Err(Error::Empty("experiment grid".to_string()));
    }
    if opts.seeds.is_empty() {
        return Err(Error::config("suite needs at least one seed"));
    }
    let mut tasks = Vec::with_capacity(grid.len() * opts.seeds.len());
    for cfg in grid {
        for &seed in &opts.seeds {
            let mut run = cfg.clone();
            run.seed = seed;
            tasks.push(run);
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let outcomes: Vec<std::result::Result<ScoreReport, String>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|cfg| run_full(cfg, data).map(|(report, _)| report).map_err(|e| e.to_string()))
            .collect()
    });

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (cfg, outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok(report) => reports.push(report),
            Err(message) => failures.push(RunFailure {
                setting_id: cfg.setting_id().to_string(),
                seed: cfg.seed,
                message,
            }),
        }
    }
    reports.sort_by(|a, b| a.setting_id.cmp(&b.setting_id).then(a.seed.cmp(&b.seed)));
    failures.sort_by(|a, b| a.setting_id.cmp(&b.setting_id).then(a.seed.cmp(&b.seed)));

    let mut by_setting: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for report in &reports {
        by_setting.entry(report.setting_id.clone()).or_default().push(report.corpus_cider_d);
    }
    let summaries = by_setting
        .iter()
        .map(|(id, scores)| Ok((id.clone(), summarize(scores)?)))
        .collect::<Result<Vec<_>>>()?;

    let significance = compute_contrasts(&reports, &opts.contrasts);

    Ok(SuiteResult { reports, failures, summaries, significance })
}

fn compute_contrasts(reports: &[ScoreReport], contrasts: &[Contrast]) -> Vec<SignificanceRow> {
    let mut scores: BTreeMap<(SettingId, u64), f64> = BTreeMap::new();
    for report in reports {
        if let Ok(id) = report.setting_id.parse::<SettingId>() {
            scores.insert((id, report.seed), report.corpus_cider_d);
        }
    }
    let mut rows = Vec::new();
    for contrast in contrasts {
        match contrast {
            Contrast::Overlap => {
                // Pair half against none for every (encoder, adapter, word,
                // fine-tune, seed); one test per encoder.
                let mut diffs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for (&(id, seed), &half_score) in
                    scores.iter().filter(|((id, _), _)| id.overlap == Overlap::Half)
                {
                    let twin = SettingId { overlap: Overlap::None, ..id };
                    if let Some(&none_score) = scores.get(&(twin, seed)) {
                        diffs
                            .entry(id.encoder.name().to_string())
                            .or_default()
                            .push(half_score - none_score);
                    }
                }
                for (group, d) in diffs {
                    if let Ok(result) = wilcoxon_one_sided(&d) {
                        rows.push(SignificanceRow { contrast: contrast.name(), group, result });
                    }
                }
            }
            Contrast::FineTune => {
                // Pair fine-tuned against fixed for every (encoder, overlap,
                // adapter, seed); one test per word source.
                let mut diffs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for (&(id, seed), &ft_score) in
                    scores.iter().filter(|((id, _), _)| id.fine_tune)
                {
                    if id.word_source == WordSource::BertStatic {
                        continue;
                    }
                    let twin = SettingId { fine_tune: false, ..id };
                    if let Some(&fx_score) = scores.get(&(twin, seed)) {
                        diffs
                            .entry(id.word_source.name().to_string())
                            .or_default()
                            .push(ft_score - fx_score);
                    }
                }
                for (group, d) in diffs {
                    if let Ok(result) = wilcoxon_one_sided(&d) {
                        rows.push(SignificanceRow { contrast: contrast.name(), group, result });
                    }
                }
            }
        }
    }
    rows
}
