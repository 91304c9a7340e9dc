//! Relation prediction between action classes of different video datasets.
//!
//! The crate learns two predictors over pairs of action classes drawn from
//! different datasets, working entirely on precomputed backbone embeddings:
//!
//! - **detection**: is the pair related at all (equal, similar or is-a)?
//! - **classification**: given a related pair, which of `equal`, `similar`,
//!   `subclass_of`, `superclass_of` holds?
//!
//! Each modality (label text or a set of video clips) gets its own encoder
//! and order-invariant head. The two modality predictions can be combined by
//! a logistic blend fitted on validation predictions. The [`harness`] module
//! runs the leave-one-dataset-out protocol end to end.
//!
//! Module map:
//!
//! - [`data`]: catalogs, relation stores, label normalization, task splits.
//! - [`embedding`]: the `AEMB` embedding file format and clip sampling.
//! - [`kernel`]: dense matrices, layers with explicit backward passes, Adam,
//!   the `APRM` checkpoint container and a finite-difference checker.
//! - [`model`]: encoders, pooling modules and the detection/classification heads.
//! - [`training`]: losses, negative sampling, the training loop and grid search.
//! - [`blend`]: logistic blending of two modality predictions.
//! - [`eval`]: F1, AP, accuracy, random baselines and report rendering.
//! - [`synth`]: synthetic multi-dataset worlds with planted relations.
//! - [`harness`]: experiment plans, the full sweep, and batch prediction.

pub mod blend;
pub mod data;
pub mod embedding;
pub mod eval;
pub mod harness;
pub mod kernel;
pub mod kv;
pub mod model;
pub mod rng;
pub mod synth;
pub mod training;

pub use data::{ActionClass, ActionKey, Catalog, RelationStore, RelationType, Task, TaskSplit};
pub use embedding::{EmbeddingStore, Modality};
