//! CSV ingestion and cross-validation folds.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FeatureStats;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvOptions {
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub target: String,
    /// Feature columns to keep; all non-target columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub task: Task,
}

fn default_delimiter() -> char {
    ';'
}

impl CsvOptions {
    pub fn new(path: impl Into<PathBuf>, target: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            delimiter: default_delimiter(),
            target: target.into(),
            features: None,
            task: Task::Regression,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: Vec<Vec<f64>>,
    /// Raw target values for regression, class indices for classification.
    pub targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub task: Task,
    /// Sorted distinct raw labels; class `c` stands for `classes[c]`.
    pub classes: Vec<f64>,
}

impl TabularDataset {
    pub fn rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Parse a delimited file with a header row. Every selected cell must be a
/// finite number; row numbers in diagnostics count the header as row 1.
pub fn load_csv_dataset(options: &CsvOptions) -> Result<TabularDataset> {
    let path = &options.path;
    if !path.exists() {
        return Err(Error::MissingFile(path.clone()));
    }
    if !options.delimiter.is_ascii() {
        return Err(Error::Config(format!(
            "delimiter {:?} is not a single-byte character",
            options.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let target_col = column(&options.target)?;
    let feature_names: Vec<String> = match &options.features {
        Some(names) => names.clone(),
        None => header
            .iter()
            .filter(|h| **h != options.target)
            .cloned()
            .collect(),
    };
    let feature_cols = feature_names
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>>>()?;
    if feature_cols.is_empty() {
        return Err(Error::Config("no feature columns selected".into()));
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| Error::MalformedCell {
                path: path.clone(),
                row,
                column: header[col].clone(),
                message: "missing cell".into(),
            })?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::MalformedCell {
                    path: path.clone(),
                    row,
                    column: header[col].clone(),
                    message: format!("{raw:?} is not a finite number"),
                }),
            }
        };
        features.push(feature_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?);
        targets.push(cell(target_col)?);
    }
    if features.is_empty() {
        return Err(Error::Empty);
    }

    let mut classes = Vec::new();
    if options.task == Task::Classification {
        classes = targets.clone();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        for t in targets.iter_mut() {
            *t = classes.partition_point(|c| c < t) as f64;
        }
    }
    Ok(TabularDataset {
        features,
        targets,
        feature_names,
        target_name: options.target.clone(),
        task: options.task,
        classes,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        csv::ErrorKind::UnequalLengths {
            pos, expected_len, len, ..
        } => Error::MalformedCell {
            path: path.to_path_buf(),
            row: pos.map_or(0, |p| p.line() as usize),
            column: format!("#{}", len + 1),
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// One cross-validation split with statistics fitted on its training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: FeatureStats,
}

impl Fold {
    /// `(x - μ) / σ` with this fold's training statistics.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        standardize(&self.stats, x)
    }

    pub fn standardized_rows(&self, data: &TabularDataset, rows: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&r| self.standardize(&data.features[r]))
            .collect()
    }
}

pub fn standardize(stats: &FeatureStats, x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(&stats.mean)
        .zip(&stats.std)
        .map(|((v, m), s)| (v - m) / s)
        .collect()
}

/// Shuffle rows with `seed` and deal them into `k` near-equal test sets.
pub fn kfold_split(data: &TabularDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = data.rows();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {k} must lie in 2..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut test = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        start += size;
        let rows: Vec<&[f64]> = train.iter().map(|&r| data.features[r].as_slice()).collect();
        let stats = FeatureStats::from_rows(&rows)?;
        if let Some(i) = stats.std.iter().position(|s| *s <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature {} is constant on the training split of fold {f}",
                data.feature_names[i]
            )));
        }
        folds.push(Fold {
            index: f,
            train,
            test,
            stats,
        });
    }
    Ok(folds)
}
