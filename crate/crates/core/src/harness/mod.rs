//! Experiment plans, the leave-one-dataset-out sweep and batch prediction.
//!
//! A sweep writes one directory per `target/task` cell under
//! `<output>/targets/`, each with its split, grid, run directories, blend
//! parameters and a cell report. A cell whose `cell.key` matches the current
//! inputs and configs is reused on rerun. The combined report lands in the
//! output root as `metrics.tsv`, `confusion.tsv`, `priors.tsv` and
//! `table.txt`.

mod experiment;
mod plan;
mod predict;

pub use experiment::{run_experiment, write_blend_meta, ExperimentSummary, RunLock, RunOptions, World};
pub use plan::{ExperimentPlan, DEFAULT_RANDOM_TRIALS};
pub use predict::{predict, read_pairs, write_scored, PredictModels, ScoredPair};

use std::path::Path;

use crate::blend::BlendError;
use crate::data::DataError;
use crate::embedding::EmbeddingError;
use crate::eval::EvalError;
use crate::kernel::KernelError;
use crate::kv::KvError;
use crate::model::ModelError;
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("plan: {0}")]
    Plan(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Lock(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    /// Errors caused by bad inputs rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Plan(_)
                | HarnessError::Validation(_)
                | HarnessError::Lock(_)
                | HarnessError::Data(_)
                | HarnessError::Embedding(_)
                | HarnessError::Kv(_)
        )
    }
}
