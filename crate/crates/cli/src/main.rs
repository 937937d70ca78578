//! Command-line interface for the captioning experiment pipeline.
//!
//! Exit codes: 0 on success, 1 when a suite completed with failed runs,
//! 2 on invalid input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use audiocap_core::data::{make_synthetic_corpus, CaptionGrammar, DataDir, Split};
use audiocap_core::experiment::{
    enumerate_grid, evaluate_model, profiles, report, run_suite, run_training, Contrast,
    EvalContext, ExperimentConfig, GridDefaults, GridFilter, SuiteOptions,
};
use audiocap_core::model::checkpoint;

#[derive(Parser)]
#[command(
    name = "audiocap",
    about = "Audio captioning on precomputed embeddings: train, evaluate, and sweep the setting grid",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data directory (captions, embeddings, word vectors).
    Synth {
        /// Number of clips to generate (>= 3; split 65/17.5/17.5).
        #[arg(long)]
        clips: usize,
        #[arg(long)]
        seed: u64,
        /// Output data directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and write its checkpoint and loss log.
    Train {
        /// JSON file mirroring the experiment configuration fields.
        #[arg(long)]
        config: PathBuf,
        /// Run seed (overrides the seed field in the config file).
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Data directory (captions, embeddings, word vectors).
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a checkpoint on the evaluation split and print the report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Enumerate the setting grid, optionally filtered.
    Grid {
        /// Profile name (desk | paper) or path to a grid-defaults JSON file.
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Filter such as `encoder=yamnet,adapter=mha|mlp`.
        #[arg(long)]
        filter: Option<String>,
        /// Print one setting id per line.
        #[arg(long)]
        list: bool,
        /// Write the matching configurations as a JSON grid file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate a grid of settings over several seeds.
    Suite {
        /// Grid JSON file (an array of experiment configurations).
        #[arg(long)]
        grid: PathBuf,
        /// Seed list: `1..10` (inclusive), `1,4,9`, or a single seed.
        #[arg(long)]
        seeds: String,
        /// Worker count.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Paired comparison to emit (`overlap`, `fine_tune`); repeatable.
        #[arg(long = "contrast")]
        contrasts: Vec<String>,
    },
    /// Regenerate summary and boxplots from a per-run CSV.
    Report {
        /// Per-run CSV (`setting_id,seed,cider_d`).
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed range {spec:?}"))?;
        let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed range {spec:?}"))?;
        if hi < lo {
            bail!("empty seed range {spec:?}");
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn load_defaults(profile: &str) -> Result<GridDefaults> {
    if let Some(defaults) = profiles::by_name(profile) {
        return Ok(defaults);
    }
    let path = Path::new(profile);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text)
            .with_context(|| format!("parsing grid defaults {profile:?}"));
    }
    bail!("unknown profile {profile:?} (expected desk, paper, or a JSON file path)");
}

fn write_training_log(path: &Path, log: &[audiocap_core::experiment::EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for rec in log {
        writeln!(out, "{},{},{}", rec.epoch, rec.train_loss, rec.val_loss).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_synth(clips: usize, seed: u64, out: &Path) -> Result<i32> {
    let corpus = make_synthetic_corpus(seed, clips, &CaptionGrammar::default())?;
    corpus.write_to_dir(out)?;
    println!(
        "wrote {} clips ({} train / {} validation / {} evaluation) to {}",
        clips,
        corpus.train.clips().len(),
        corpus.validation.clips().len(),
        corpus.evaluation.clips().len(),
        out.display()
    );
    Ok(0)
}

fn cmd_train(config: &Path, seed: u64, out: &Path, data: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    cfg.seed = seed;
    cfg.validate()?;

    let data = DataDir::new(data);
    let output = run_training(&cfg, &data)?;

    std::fs::create_dir_all(out)?;
    write_training_log(&out.join("training_log.csv"), &output.log)?;
    let resolved_json = serde_json::to_value(&output.resolved)?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&output.resolved)?,
    )?;
    let ckpt_path = out.join("checkpoint.ckpt");
    checkpoint::save_file(&output.best_model, Some(resolved_json), &ckpt_path)?;

    let best = output.log.iter().find(|r| r.epoch == output.best_epoch);
    println!(
        "{} seed {}: stopped after epoch {}, best epoch {} (val loss {}), checkpoint {}",
        cfg.setting_id(),
        cfg.seed,
        output.stopped_epoch,
        output.best_epoch,
        best.map(|r| r.val_loss.to_string()).unwrap_or_else(|| "-".into()),
        ckpt_path.display()
    );
    Ok(0)
}

fn cmd_eval(checkpoint_path: &Path, data: &Path) -> Result<i32> {
    let (model, meta) = checkpoint::load_file(checkpoint_path)?;
    let meta = meta.ok_or_else(|| {
        anyhow!("checkpoint carries no experiment metadata; it was not written by `train`")
    })?;
    let cfg: ExperimentConfig =
        serde_json::from_value(meta).context("parsing experiment metadata from checkpoint")?;

    let data = DataDir::new(data);
    let train = data.load_split(Split::Train)?;
    let vocab =
        audiocap_core::data::Vocabulary::build(&train, audiocap_core::experiment::MIN_COUNT)?;
    let eval = data.load_split(Split::Evaluation)?;
    let store = data.store();
    let report = evaluate_model(
        &model,
        &vocab,
        &eval,
        &EvalContext {
            store: &store,
            encoder: cfg.encoder_id,
            overlap: cfg.overlap,
            setting_id: cfg.setting_id().to_string(),
            seed: cfg.seed,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_grid(profile: &str, filter: Option<&str>, list: bool, out: Option<&Path>) -> Result<i32> {
    let defaults = load_defaults(profile)?;
    let mut grid = enumerate_grid(&defaults);
    if let Some(expr) = filter {
        grid = GridFilter::parse(expr)?.apply(grid);
    }
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&grid)?)?;
        println!("wrote {} settings to {}", grid.len(), path.display());
    }
    if list {
        for cfg in &grid {
            println!("{}", cfg.setting_id());
        }
    }
    if !list && out.is_none() {
        println!("{} settings", grid.len());
    }
    Ok(0)
}

fn cmd_suite(
    grid_path: &Path,
    seeds: &str,
    jobs: usize,
    out: &Path,
    data: &Path,
    contrast_names: &[String],
) -> Result<i32> {
    let text = std::fs::read_to_string(grid_path)
        .with_context(|| format!("reading grid {}", grid_path.display()))?;
    let grid: Vec<ExperimentConfig> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", grid_path.display()))?;
    for cfg in &grid {
        cfg.validate()?;
    }
    let seeds = parse_seeds(seeds)?;
    let contrasts = contrast_names
        .iter()
        .map(|c| Contrast::parse(c).map_err(Into::into))
        .collect::<Result<Vec<_>>>()?;

    let data = DataDir::new(data);
    let result = run_suite(&grid, &data, &SuiteOptions { seeds, jobs, contrasts })?;

    std::fs::create_dir_all(out)?;
    let rows = report::rows_from_reports(&result.reports);
    if !rows.is_empty() {
        report::write_report(&rows, out)?;
    }
    if !result.significance.is_empty() {
        report::write_significance_csv(out.join("significance.csv"), &result.significance)?;
    }
    if !result.failures.is_empty() {
        report::write_failures_csv(out.join("failures.csv"), &result.failures)?;
        for f in &result.failures {
            eprintln!("run failed: {} seed {}: {}", f.setting_id, f.seed, f.message);
        }
    }
    println!(
        "{} runs succeeded, {} failed; results in {}",
        result.reports.len(),
        result.failures.len(),
        out.display()
    );
    Ok(if result.failures.is_empty() { 0 } else { 1 })
}

fn cmd_report(runs: &Path, out: &Path) -> Result<i32> {
    let rows = report::read_per_run_csv(runs)?;
    let files = report::write_report(&rows, out)?;
    println!(
        "wrote {}, {}, and {} boxplot(s) to {}",
        files.per_run.file_name().unwrap().to_string_lossy(),
        files.summary.file_name().unwrap().to_string_lossy(),
        files.boxplots.len(),
        out.display()
    );
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth { clips, seed, out } => cmd_synth(clips, seed, &out),
        Command::Train { config, seed, out, data } => cmd_train(&config, seed, &out, &data),
        Command::Eval { checkpoint, data } => cmd_eval(&checkpoint, &data),
        Command::Grid { profile, filter, list, out } => {
            cmd_grid(&profile, filter.as_deref(), list, out.as_deref())
        }
        Command::Suite { grid, seeds, jobs, out, data, contrasts } => {
            cmd_suite(&grid, &seeds, jobs, &out, &data, &contrasts)
        }
        Command::Report { runs, out } => cmd_report(&runs, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
