//! Data ingestion, cross-validated evaluation runs and report output.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod report;

pub use config::EvaluationConfig;
pub use dataset::{kfold_split, load_csv_dataset, CsvOptions, TabularDataset};
pub use evaluate::{run_evaluation, EvaluationReport};
pub use report::{emit_report, ReportFormat};
