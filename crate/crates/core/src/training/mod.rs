//! Losses, negative sampling, the mini-batch training loop and grid search.

mod config;
mod inputs;
mod losses;
mod negatives;
mod rundir;
mod search;
mod trainer;

pub use config::{TrainConfig, ValNegatives};
pub use inputs::Inputs;
pub use losses::{
    classification_loss, classification_terms, clamp_prob, detection_loss, detection_terms, PROB_CLAMP,
};
pub use negatives::{complement_size, sample_negatives, NegativeSampler};
pub use rundir::{read_epochs, write_epochs, write_grid, write_run_dir};
pub use search::{grid_for, hyperparameter_search, ConfigOverride, GridPoint, GridRow, SearchOutcome};
pub use trainer::{epoch_examples, predict_pairs, train, validation_set, EpochReport, Example, Target, TrainOutcome};

use crate::data::DataError;
use crate::embedding::EmbeddingError;
use crate::kernel::KernelError;
use crate::kv::KvError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("diverged at epoch {epoch}, batch {batch}: {message}")]
    Divergence { epoch: usize, batch: usize, message: String },
    #[error("grid point {point}: {source}")]
    Grid { point: String, source: Box<TrainError> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl TrainError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        TrainError::Io { path: path.display().to_string(), source }
    }
}
