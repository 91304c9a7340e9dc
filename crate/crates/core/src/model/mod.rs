//! Encoders, pooling modules and the order-invariant relation heads.
//!
//! A [`RelationModel`] covers one modality and one task: an MLP encoder
//! (followed by a pooling module for clip sets) and a linear head applied to
//! both concatenation orders of a pair.

mod encoder;
mod heads;
mod meta;
mod pooling;
mod relation;

pub use encoder::{Block, Mlp, MlpCache};
pub use heads::{pi, Head};
pub use meta::{config_from_section, meta_section, read_meta, write_meta, PI_CONVENTION, VIDEO_BN_CHOICE};
pub use pooling::{AttentionPool, PoolCache, Pooling, PoolingKind};
pub use relation::{to_prediction, ModelConfig, RelationModel, TrainPass, DEFAULT_D_ATT, DEFAULT_D_EMB};

use crate::data::RelationType;
use crate::kernel::KernelError;
use crate::kv::KvError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("empty clip set")]
    EmptySet,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Output for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    /// Probability that the pair is related.
    Det(f64),
    /// Distribution over relation types in [`RelationType`] index order.
    Cls([f64; RelationType::COUNT]),
}

impl Prediction {
    pub fn det(&self) -> Option<f64> {
        match *self {
            Prediction::Det(p) => Some(p),
            Prediction::Cls(_) => None,
        }
    }

    pub fn cls(&self) -> Option<[f64; RelationType::COUNT]> {
        match *self {
            Prediction::Cls(p) => Some(p),
            Prediction::Det(_) => None,
        }
    }

    /// Argmax type, lowest index on ties.
    pub fn argmax(&self) -> Option<RelationType> {
        let p = self.cls()?;
        let mut best = 0;
        for i in 1..p.len() {
            if p[i] > p[best] {
                best = i;
            }
        }
        RelationType::from_index(best)
    }
}
