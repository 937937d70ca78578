//! Deterministic result files: per-run and summary CSVs, the significance
//! table, and one boxplot SVG per (encoder, adapter) grouping.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::config::SettingId;
use crate::experiment::suite::{RunFailure, SignificanceRow};
use crate::metrics::summary::{summarize, SummaryStats};
use crate::metrics::ScoreReport;

#[derive(Debug, Clone, PartialEq)]
pub struct PerRunRow {
    pub setting_id: String,
    pub seed: u64,
    pub cider_d: f64,
}

pub fn rows_from_reports(reports: &[ScoreReport]) -> Vec<PerRunRow> {
    reports
        .iter()
        .map(|r| PerRunRow {
            setting_id: r.setting_id.clone(),
            seed: r.seed,
            cider_d: r.corpus_cider_d,
        })
        .collect()
}

pub fn write_per_run_csv(path: impl AsRef<Path>, rows: &[PerRunRow]) -> Result<()> {
    let mut out = String::from("setting_id,seed,cider_d\n");
    for row in rows {
        writeln!(out, "{},{},{}", row.setting_id, row.seed, row.cider_d).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_per_run_csv(path: impl AsRef<Path>) -> Result<Vec<PerRunRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "setting_id,seed,cider_d")) => {}
        _ => {
            return Err(Error::format(format!(
                "{}: per-run CSV must start with setting_id,seed,cider_d",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let seed = fields[1].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("bad seed {:?}", fields[1]),
        })?;
        let cider_d = fields[2].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: format!("bad score {:?}", fields[2]),
        })?;
        rows.push(PerRunRow { setting_id: fields[0].to_string(), seed, cider_d });
    }
    Ok(rows)
}

pub fn write_summary_csv(
    path: impl AsRef<Path>,
    summaries: &[(String, SummaryStats)],
) -> Result<()> {
    let mut out = String::from("setting_id,mean,sd,min,q1,median,q3,max,n\n");
    for (id, s) in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            id, s.mean, s.sd, s.min, s.q1, s.median, s.q3, s.max, s.n
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_significance_csv(
    path: impl AsRef<Path>,
    rows: &[SignificanceRow],
) -> Result<()> {
    let mut out = String::from("contrast,group,n_effective,w_statistic,p_one_sided,method\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.contrast,
            row.group,
            row.result.n_effective,
            row.result.w_statistic,
            row.result.p_one_sided,
            row.result.method.name()
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_failures_csv(path: impl AsRef<Path>, failures: &[RunFailure]) -> Result<()> {
    let mut out = String::from("setting_id,seed,message\n");
    for f in failures {
        let clean = f.message.replace(['\n', ','], ";");
        writeln!(out, "{},{},{}", f.setting_id, f.seed, clean).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Summaries per setting id from per-run rows, sorted by setting id.
pub fn summarize_rows(rows: &[PerRunRow]) -> Result<Vec<(String, SummaryStats)>> {
    let mut by_setting: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for row in rows {
        by_setting.entry(row.setting_id.clone()).or_default().push(row.cider_d);
    }
    by_setting
        .into_iter()
        .map(|(id, scores)| Ok((id, summarize(&scores)?)))
        .collect()
}

const PLOT_HEIGHT: f64 = 360.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_BOTTOM: f64 = 80.0;
const SLOT_WIDTH: f64 = 120.0;
const BOX_HALF: f64 = 28.0;

fn svg_boxplot(group: &str, boxes: &[(String, SummaryStats)]) -> String {
    let width = MARGIN_LEFT + SLOT_WIDTH * boxes.len() as f64 + 30.0;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let ymax = boxes.iter().map(|(_, s)| s.max).fold(0.0f64, f64::max).max(1e-6) * 1.05;
    let y = |v: f64| MARGIN_TOP + PLOT_HEIGHT * (1.0 - v / ymax);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{group}</text>",
        width / 2.0
    )
    .unwrap();
    // Axis and ticks.
    writeln!(
        svg,
        "<line x1=\"{MARGIN_LEFT:.1}\" y1=\"{:.2}\" x2=\"{MARGIN_LEFT:.1}\" y2=\"{:.2}\" stroke=\"black\"/>",
        y(ymax),
        y(0.0)
    )
    .unwrap();
    for tick in [0.0, ymax / 2.0, ymax] {
        writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{MARGIN_LEFT:.1}\" y2=\"{:.2}\" stroke=\"black\"/>",
            MARGIN_LEFT - 5.0,
            y(tick),
            y(tick)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{tick:.3}</text>",
            MARGIN_LEFT - 8.0,
            y(tick) + 3.0
        )
        .unwrap();
    }
    for (i, (label, s)) in boxes.iter().enumerate() {
        let cx = MARGIN_LEFT + SLOT_WIDTH * (i as f64 + 0.5);
        // Whisker with caps.
        writeln!(
            svg,
            "<line x1=\"{cx:.1}\" y1=\"{:.2}\" x2=\"{cx:.1}\" y2=\"{:.2}\" stroke=\"#334\"/>",
            y(s.max),
            y(s.min)
        )
        .unwrap();
        for cap in [s.min, s.max] {
            writeln!(
                svg,
                "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"#334\"/>",
                cx - BOX_HALF / 2.0,
                y(cap),
                cx + BOX_HALF / 2.0,
                y(cap)
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<rect class=\"box\" x=\"{:.1}\" y=\"{:.2}\" width=\"{:.1}\" height=\"{:.2}\" fill=\"#9db8e8\" stroke=\"#334\"/>",
            cx - BOX_HALF,
            y(s.q3),
            BOX_HALF * 2.0,
            (y(s.q1) - y(s.q3)).max(0.5)
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"#112\" stroke-width=\"2\"/>",
            cx - BOX_HALF,
            y(s.median),
            cx + BOX_HALF,
            y(s.median)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\" transform=\"rotate(35 {cx:.1} {:.1})\">{label}</text>",
            MARGIN_TOP + PLOT_HEIGHT + 18.0,
            MARGIN_TOP + PLOT_HEIGHT + 18.0
        )
        .unwrap();
    }
    writeln!(svg, "</svg>").unwrap();
    svg
}

/// One boxplot per (encoder, adapter) grouping, one box per setting in the
/// grouping. Returns the written paths.
pub fn write_boxplots(dir: impl AsRef<Path>, rows: &[PerRunRow]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut groups: std::collections::BTreeMap<(String, String), Vec<&PerRunRow>> =
        Default::default();
    for row in rows {
        let id: SettingId = row.setting_id.parse()?;
        groups
            .entry((id.encoder.name().to_string(), id.adapter.name().to_string()))
            .or_default()
            .push(row);
    }
    let mut written = Vec::new();
    for ((encoder, adapter), group_rows) in groups {
        let mut by_setting: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
        for row in group_rows {
            by_setting.entry(row.setting_id.clone()).or_default().push(row.cider_d);
        }
        let boxes = by_setting
            .into_iter()
            .map(|(id, scores)| {
                let parsed: SettingId = id.parse()?;
                let label = format!(
                    "{}-{}-{}",
                    parsed.overlap.name(),
                    parsed.word_source.name(),
                    if parsed.fine_tune { "ft" } else { "fx" }
                );
                Ok((label, summarize(&scores)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let svg = svg_boxplot(&format!("{encoder} / {adapter}"), &boxes);
        let path = dir.join(format!("box_{encoder}_{adapter}.svg"));
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

pub struct ReportFiles {
    pub per_run: PathBuf,
    pub summary: PathBuf,
    pub boxplots: Vec<PathBuf>,
}

/// The standard report bundle for a set of per-run rows.
pub fn write_report(rows: &[PerRunRow], out_dir: impl AsRef<Path>) -> Result<ReportFiles> {
    if rows.is_empty() {
        return Err(Error::Empty("no runs to report".to_string()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.setting_id.cmp(&b.setting_id).then(a.seed.cmp(&b.seed)));
    let per_run = out_dir.join("per_run.csv");
    write_per_run_csv(&per_run, &sorted)?;
    let summary = out_dir.join("summary.csv");
    write_summary_csv(&summary, &summarize_rows(&sorted)?)?;
    let boxplots = write_boxplots(out_dir, &sorted)?;
    Ok(ReportFiles { per_run, summary, boxplots })
}
