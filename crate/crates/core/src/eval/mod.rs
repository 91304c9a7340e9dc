//! Detection and classification metrics, random baselines and report files.

mod baseline;
mod metrics;
mod report;

pub use baseline::{
    detection_prior, expected_accuracy, prior_of, random_classification, random_detection, RandomClassification,
    RandomDetection,
};
pub use metrics::{
    accuracy, argmax, average_precision, evaluate_detection, f1_at_threshold, rank_order, tune_threshold,
    ClassificationResult, DetectionResult, Prf, ThresholdRule,
};
pub use report::{
    classification_rows, detection_rows, missing_rows, random_classification_rows, random_detection_rows, Approach,
    ConfusionRow, MetricRow, PriorRow, Report, ReportPaths, AP_NOTE, CLS_METRICS, DET_METRICS,
};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl EvalError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io { path: path.display().to_string(), source }
    }
}
