//! Report files.
//!
//! | file                   | contents                                        |
//! |------------------------|-------------------------------------------------|
//! | `report.json`          | the full report                                 |
//! | `scores.csv`           | one row per scalar score component              |
//! | `metric_means.csv`     | per (method, metric) mean, 95% CI, median, max  |
//! | `flip_curves.csv`      | every per-sample flipping curve                 |
//! | `flip_curve_means.csv` | mean flipping curve per method with 95% CI      |
//! | `sanity.csv`           | sanity checks per fold, fold mean and pooled    |
//! | `consistency.csv`      | internal consistency per method                 |

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Aux, MetricKind};
use crate::numstat;
use crate::pipeline::evaluate::EvaluationReport;

pub const REPORT_JSON: &str = "report.json";
pub const SCORES_CSV: &str = "scores.csv";
pub const MEANS_CSV: &str = "metric_means.csv";
pub const CURVES_CSV: &str = "flip_curves.csv";
pub const CURVE_MEANS_CSV: &str = "flip_curve_means.csv";
pub const SANITY_CSV: &str = "sanity.csv";
pub const CONSISTENCY_CSV: &str = "consistency.csv";

const UNDEFINED: &str = "UNDEFINED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    /// `scores.csv`.
    Flat,
    /// Means, curves and sanity tables for plotting.
    Plots,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Flat, ReportFormat::Plots];
}

/// One row of `scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub fold: usize,
    pub method: String,
    pub metric: String,
    pub sample_id: usize,
    /// A number, or `UNDEFINED`.
    pub value: String,
    pub reason: String,
}

impl FlatRow {
    pub fn numeric(&self) -> Option<f64> {
        self.value.parse().ok()
    }
}

#[derive(Serialize)]
struct MeanRow<'a> {
    method: &'a str,
    metric: &'a str,
    mean: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    median: Option<f64>,
    max: Option<f64>,
    defined: usize,
    undefined: usize,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    fold: usize,
    method: &'a str,
    sample_id: usize,
    fraction: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct CurveMeanRow<'a> {
    method: &'a str,
    fraction: f64,
    mean_ratio: f64,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    samples: usize,
}

#[derive(Serialize)]
struct SanityRow<'a> {
    metric: &'a str,
    check: &'a str,
    scope: String,
    value: Option<f64>,
}

#[derive(Serialize)]
struct ConsistencyRow<'a> {
    metric_a: &'a str,
    metric_b: &'a str,
    method: &'a str,
    scope: String,
    value: Option<f64>,
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn flat_rows(report: &EvaluationReport) -> Vec<FlatRow> {
    let mut rows = Vec::new();
    for r in &report.records {
        let reason = r.reason().map(|x| x.code().to_string()).unwrap_or_default();
        for (metric, value) in r.components() {
            rows.push(FlatRow {
                fold: r.fold,
                method: r.method.clone(),
                metric,
                sample_id: r.sample_id,
                value: value.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:?}")),
                reason: reason.clone(),
            });
        }
    }
    rows
}

pub fn read_flat_export(path: &Path) -> Result<Vec<FlatRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Report(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvaluationReport::from_json(&text)
}

fn curves(report: &EvaluationReport) -> impl Iterator<Item = (&crate::pipeline::evaluate::ScoreRecord, &[f64], &[f64])> {
    report.records.iter().filter_map(|r| match (&r.metric, &r.aux) {
        (MetricKind::FeatureFlipping, Some(Aux::Curve { fractions, ratios })) => {
            Some((r, fractions.as_slice(), ratios.as_slice()))
        }
        _ => None,
    })
}

fn write_plots(report: &EvaluationReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(MEANS_CSV);
    let mut w = writer(&path)?;
    for a in &report.aggregates {
        w.serialize(MeanRow {
            method: &a.method,
            metric: &a.metric,
            mean: a.mean,
            ci_low: a.ci_low,
            ci_high: a.ci_high,
            median: a.median,
            max: a.max,
            defined: a.defined,
            undefined: a.undefined,
        })?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(CURVES_CSV);
    let mut w = writer(&path)?;
    // method -> fraction bits -> ratios, in report method order
    let mut by_method: BTreeMap<usize, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for (r, fractions, ratios) in curves(report) {
        let m = report.methods.iter().position(|x| *x == r.method).unwrap_or(usize::MAX);
        for (&f, &y) in fractions.iter().zip(ratios) {
            w.serialize(CurveRow {
                fold: r.fold,
                method: &r.method,
                sample_id: r.sample_id,
                fraction: f,
                ratio: y,
            })?;
            by_method
                .entry(m)
                .or_default()
                .entry(f.to_bits())
                .or_insert_with(|| (f, Vec::new()))
                .1
                .push(y);
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(CURVE_MEANS_CSV);
    let mut w = writer(&path)?;
    for (m, points) in &by_method {
        let method = report.methods.get(*m).map_or("", String::as_str);
        let mut points: Vec<_> = points.values().collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (f, ys) in points {
            let mean = numstat::mean(ys).expect("non-empty");
            let half = numstat::sample_std(ys).map(|sd| 1.96 * sd / (ys.len() as f64).sqrt());
            w.serialize(CurveMeanRow {
                method,
                fraction: *f,
                mean_ratio: mean,
                ci_low: half.map(|h| mean - h),
                ci_high: half.map(|h| mean + h),
                samples: ys.len(),
            })?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(SANITY_CSV);
    let mut w = writer(&path)?;
    for e in &report.sanity.checks {
        for (fold, v) in &e.per_fold {
            w.serialize(SanityRow {
                metric: &e.metric,
                check: e.check.label(),
                scope: format!("fold{fold}"),
                value: *v,
            })?;
        }
        w.serialize(SanityRow {
            metric: &e.metric,
            check: e.check.label(),
            scope: "fold_mean".into(),
            value: e.fold_mean,
        })?;
        if e.pooled.is_some() {
            w.serialize(SanityRow {
                metric: &e.metric,
                check: e.check.label(),
                scope: "pooled".into(),
                value: e.pooled,
            })?;
        }
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(CONSISTENCY_CSV);
    let mut w = writer(&path)?;
    for e in &report.sanity.internal_consistency {
        let row = |scope: String, value| ConsistencyRow {
            metric_a: &e.metric_a,
            metric_b: &e.metric_b,
            method: &e.method,
            scope,
            value,
        };
        for (fold, v) in &e.per_fold {
            w.serialize(row(format!("fold{fold}"), *v))?;
        }
        w.serialize(row("fold_mean".into(), e.fold_mean))?;
        if e.pooled.is_some() {
            w.serialize(row("pooled".into(), e.pooled))?;
        }
    }
    finish(w, &path)?;
    written.push(path);
    Ok(())
}

/// Write the requested formats into `dir`, creating it if needed. Returns
/// the written paths.
pub fn emit_report(
    report: &EvaluationReport,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    if report.records.is_empty() {
        return Err(Error::Report("report holds no score records".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = dir.join(REPORT_JSON);
                let mut text = report.to_json()?;
                text.push('\n');
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            ReportFormat::Flat => {
                let path = dir.join(SCORES_CSV);
                let mut w = writer(&path)?;
                for row in flat_rows(report) {
                    w.serialize(row)?;
                }
                finish(w, &path)?;
                written.push(path);
            }
            ReportFormat::Plots => write_plots(report, dir, &mut written)?,
        }
    }
    Ok(written)
}
