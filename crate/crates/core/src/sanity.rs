//! Reliability checks for the metrics themselves.
//!
//! Each check consumes a [`MetricScoreTable`]: one scalar metric component
//! scored for several methods on the same samples. Missing (undefined)
//! cells are handled pairwise-complete, so a sample is dropped only from
//! the comparisons where it is missing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub fold: usize,
    pub sample_id: usize,
}

/// Scores of one metric component, methods × samples, row-major by method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScoreTable {
    pub metric: String,
    pub methods: Vec<String>,
    pub samples: Vec<SampleKey>,
    values: Vec<Option<f64>>,
}

impl MetricScoreTable {
    pub fn new(metric: impl Into<String>, methods: Vec<String>, samples: Vec<SampleKey>) -> Self {
        let len = methods.len() * samples.len();
        Self {
            metric: metric.into(),
            methods,
            samples,
            values: vec![None; len],
        }
    }

    /// Build from per-method score rows, `None` marking undefined cells.
    pub fn from_rows(
        metric: impl Into<String>,
        methods: Vec<String>,
        samples: Vec<SampleKey>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if rows.len() != methods.len() {
            return Err(Error::LengthMismatch {
                left: methods.len(),
                right: rows.len(),
            });
        }
        let mut t = Self::new(metric, methods, samples);
        for (m, row) in rows.into_iter().enumerate() {
            if row.len() != t.samples.len() {
                return Err(Error::LengthMismatch {
                    left: t.samples.len(),
                    right: row.len(),
                });
            }
            for (s, v) in row.into_iter().enumerate() {
                t.set(m, s, v)?;
            }
        }
        Ok(t)
    }

    pub fn get(&self, method: usize, sample: usize) -> Option<f64> {
        self.values[method * self.samples.len() + sample]
    }

    pub fn set(&mut self, method: usize, sample: usize, value: Option<f64>) -> Result<()> {
        if method >= self.methods.len() || sample >= self.samples.len() {
            return Err(Error::InvalidArgument(format!(
                "cell ({method}, {sample}) outside a {}x{} table",
                self.methods.len(),
                self.samples.len()
            )));
        }
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(Error::NonFinite(sample));
            }
        }
        let n = self.samples.len();
        self.values[method * n + sample] = value;
        Ok(())
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn folds(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.fold)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The sub-table holding only the samples of `fold`.
    pub fn fold_slice(&self, fold: usize) -> Self {
        let keep: Vec<usize> = (0..self.samples.len())
            .filter(|&s| self.samples[s].fold == fold)
            .collect();
        let mut t = Self::new(
            self.metric.clone(),
            self.methods.clone(),
            keep.iter().map(|&s| self.samples[s]).collect(),
        );
        for m in 0..self.methods.len() {
            for (j, &s) in keep.iter().enumerate() {
                t.values[m * keep.len() + j] = self.get(m, s);
            }
        }
        t
    }

    fn row(&self, method: usize) -> &[Option<f64>] {
        let n = self.samples.len();
        &self.values[method * n..(method + 1) * n]
    }

    fn require_methods(&self) -> Result<()> {
        if self.methods.len() < 2 {
            return Err(Error::TooShort {
                required: 2,
                actual: self.methods.len(),
            });
        }
        Ok(())
    }
}

fn complete_pairs(a: &[Option<f64>], b: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((((*x)?), (*y)?)))
        .unzip()
}

fn spearman_complete(a: &[Option<f64>], b: &[Option<f64>]) -> Result<Option<f64>> {
    let (x, y) = complete_pairs(a, b);
    if x.len() < 2 {
        return Ok(None);
    }
    numstat::spearman_rho(&x, &y).map(Some)
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    numstat::mean(&v)
}

/// Mean Spearman correlation across samples over all method pairs.
/// `None` when no pair shares two defined samples.
pub fn inter_method_reliability(table: &MetricScoreTable) -> Result<Option<f64>> {
    table.require_methods()?;
    let m = table.methods.len();
    let mut rhos = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            rhos.push(spearman_complete(table.row(a), table.row(b))?);
        }
    }
    Ok(mean_defined(rhos))
}

/// Mean Spearman correlation across methods over all sample pairs.
pub fn ranking_consistency(table: &MetricScoreTable) -> Result<Option<f64>> {
    table.require_methods()?;
    let n = table.samples.len();
    if n < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: n,
        });
    }
    let columns: Vec<Vec<Option<f64>>> = (0..n)
        .map(|s| (0..table.methods.len()).map(|m| table.get(m, s)).collect())
        .collect();
    let mut rhos = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            rhos.push(spearman_complete(&columns[a], &columns[b])?);
        }
    }
    Ok(mean_defined(rhos))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcvResult {
    pub value: Option<f64>,
    /// Methods left out because their mean score is zero or they have fewer
    /// than two defined samples.
    pub skipped: Vec<String>,
}

/// Per-method `std / |mean|` across samples, averaged over methods.
pub fn average_coefficient_of_variation(table: &MetricScoreTable) -> Result<AcvResult> {
    if table.methods.is_empty() {
        return Err(Error::Empty);
    }
    let mut cvs = Vec::new();
    let mut skipped = Vec::new();
    for (m, name) in table.methods.iter().enumerate() {
        let v: Vec<f64> = table.row(m).iter().flatten().copied().collect();
        match (numstat::mean(&v), numstat::sample_std(&v)) {
            (Some(mu), Some(sd)) if mu != 0.0 => cvs.push(sd / mu.abs()),
            _ => skipped.push(name.clone()),
        }
    }
    Ok(AcvResult {
        value: numstat::mean(&cvs),
        skipped,
    })
}

/// Per method, the Spearman correlation between two metrics' scores.
pub fn internal_consistency_reliability(
    a: &MetricScoreTable,
    b: &MetricScoreTable,
) -> Result<Vec<(String, Option<f64>)>> {
    if a.methods != b.methods || a.samples != b.samples {
        return Err(Error::InvalidArgument(format!(
            "tables for {} and {} do not share methods and samples",
            a.metric, b.metric
        )));
    }
    a.methods
        .iter()
        .enumerate()
        .map(|(m, name)| Ok((name.clone(), spearman_complete(a.row(m), b.row(m))?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SanityCheck {
    InterMethodReliability,
    RankingConsistency,
    AverageCoefficientOfVariation,
}

impl SanityCheck {
    pub const ALL: [SanityCheck; 3] = [
        SanityCheck::InterMethodReliability,
        SanityCheck::RankingConsistency,
        SanityCheck::AverageCoefficientOfVariation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SanityCheck::InterMethodReliability => "inter_method_reliability",
            SanityCheck::RankingConsistency => "ranking_consistency",
            SanityCheck::AverageCoefficientOfVariation => "average_coefficient_of_variation",
        }
    }

    fn run(self, table: &MetricScoreTable) -> Result<Option<f64>> {
        match self {
            SanityCheck::InterMethodReliability => inter_method_reliability(table),
            SanityCheck::RankingConsistency => ranking_consistency(table),
            SanityCheck::AverageCoefficientOfVariation => {
                Ok(average_coefficient_of_variation(table)?.value)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityEntry {
    pub metric: String,
    pub check: SanityCheck,
    /// `(fold, value)`; `None` where the check is undefined on that fold.
    pub per_fold: Vec<(usize, Option<f64>)>,
    pub fold_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub metric_a: String,
    pub metric_b: String,
    pub method: String,
    pub per_fold: Vec<(usize, Option<f64>)>,
    pub fold_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub checks: Vec<SanityEntry>,
    pub internal_consistency: Vec<ConsistencyEntry>,
}

impl SanityReport {
    pub fn find(&self, metric: &str, check: SanityCheck) -> Option<&SanityEntry> {
        self.checks
            .iter()
            .find(|e| e.metric == metric && e.check == check)
    }
}

/// Run every check on every table fold by fold, plus internal consistency for
/// each `(metric_a, metric_b)` pair. `pooled` adds the value over all folds
/// at once.
pub fn sanity_report(
    tables: &[MetricScoreTable],
    consistency_pairs: &[(String, String)],
    pooled: bool,
) -> Result<SanityReport> {
    let mut report = SanityReport::default();
    for table in tables {
        let folds = table.folds();
        for check in SanityCheck::ALL {
            let mut per_fold = Vec::with_capacity(folds.len());
            for &f in &folds {
                let slice = table.fold_slice(f);
                let value = if slice.samples.len() < 2 || slice.methods.len() < 2 {
                    None
                } else {
                    check.run(&slice)?
                };
                per_fold.push((f, value));
            }
            let pooled = if pooled && table.samples.len() >= 2 && table.methods.len() >= 2 {
                check.run(table)?
            } else {
                None
            };
            report.checks.push(SanityEntry {
                metric: table.metric.clone(),
                check,
                fold_mean: mean_defined(per_fold.iter().map(|p| p.1)),
                per_fold,
                pooled,
            });
        }
    }
    for (ma, mb) in consistency_pairs {
        let find = |name: &str| {
            tables
                .iter()
                .find(|t| t.metric == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))
        };
        let (a, b) = (find(ma)?, find(mb)?);
        let folds = a.folds();
        let mut per_method: Vec<Vec<(usize, Option<f64>)>> = vec![Vec::new(); a.methods.len()];
        for &f in &folds {
            let rows = internal_consistency_reliability(&a.fold_slice(f), &b.fold_slice(f))?;
            for (m, (_, v)) in rows.into_iter().enumerate() {
                per_method[m].push((f, v));
            }
        }
        let pooled_rows = if pooled {
            Some(internal_consistency_reliability(a, b)?)
        } else {
            None
        };
        for (m, per_fold) in per_method.into_iter().enumerate() {
            report.internal_consistency.push(ConsistencyEntry {
                metric_a: ma.clone(),
                metric_b: mb.clone(),
                method: a.methods[m].clone(),
                fold_mean: mean_defined(per_fold.iter().map(|p| p.1)),
                per_fold,
                pooled: pooled_rows.as_ref().and_then(|r| r[m].1),
            });
        }
    }
    Ok(report)
}
