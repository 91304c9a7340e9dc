//! Action catalogs, relation annotations and task splits.

mod catalog;
mod label;
mod split;
mod store;

use std::fmt;
use std::str::FromStr;

pub use catalog::{ActionClass, Catalog};
pub use label::normalize_label;
pub use split::{
    build_classification_split, build_detection_split, class_prior, read_split_file, write_split_file, LabeledPair,
    Partition, SplitLine, SplitWarning, TaskSplit, DEFAULT_VAL_FRACTION,
};
pub use store::{ingest_relations, Orientation, RelationStore, StoreSummary};

/// Index of an action inside a [`Catalog`]. Catalog order is the lexicographic
/// order of `(dataset_id, action_id)`, so comparing indices compares keys.
pub type ActionIdx = usize;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown action `{key}`")]
    UnknownAction { line: u64, key: String },
    #[error("line {line}: unknown relation `{value}` (expected equal, similar or is-a)")]
    UnknownRelation { line: u64, value: String },
    #[error("line {line}: pair {pair} already stored as {existing}, row says {found}")]
    Conflict { line: u64, pair: String, existing: RelationType, found: RelationType },
    #[error("line {line}: duplicate action `{key}`")]
    DuplicateAction { line: u64, key: String },
    #[error("line {line}: relation endpoints {a} and {b} must be distinct actions of different datasets")]
    SameDataset { line: u64, a: String, b: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl DataError {
    fn csv(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        DataError::Parse { line, message: err.to_string() }
    }
}

/// `dataset_id/action_id`. Dataset ids never contain `/`; action ids may.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionKey {
    pub dataset: String,
    pub action: String,
}

impl ActionKey {
    pub fn new(dataset: impl Into<String>, action: impl Into<String>) -> Self {
        ActionKey { dataset: dataset.into(), action: action.into() }
    }
}

impl fmt::Display for ActionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dataset, self.action)
    }
}

impl FromStr for ActionKey {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((d, a)) if !d.is_empty() && !a.is_empty() => Ok(ActionKey::new(d, a)),
            _ => Err(DataError::InvalidArgument(format!("`{s}` is not a dataset/action key"))),
        }
    }
}

/// Relation types in one-hot index order: `similar` is index 1 and the two
/// is-a directions occupy 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    Equal = 0,
    Similar = 1,
    SubclassOf = 2,
    SuperclassOf = 3,
}

impl RelationType {
    pub const ALL: [RelationType; 4] =
        [RelationType::Equal, RelationType::Similar, RelationType::SubclassOf, RelationType::SuperclassOf];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The relation seen from the other endpoint.
    pub fn inverse(self) -> Self {
        match self {
            RelationType::SubclassOf => RelationType::SuperclassOf,
            RelationType::SuperclassOf => RelationType::SubclassOf,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Equal => "equal",
            RelationType::Similar => "similar",
            RelationType::SubclassOf => "subclass_of",
            RelationType::SuperclassOf => "superclass_of",
        }
    }

    pub fn is_a(self) -> bool {
        matches!(self, RelationType::SubclassOf | RelationType::SuperclassOf)
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal" => Ok(RelationType::Equal),
            "similar" => Ok(RelationType::Similar),
            "subclass_of" => Ok(RelationType::SubclassOf),
            "superclass_of" => Ok(RelationType::SuperclassOf),
            _ => Err(DataError::InvalidArgument(format!("unknown relation type `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Detection,
    Classification,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Detection => "det",
            Task::Classification => "cls",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "detection" => Ok(Task::Detection),
            "cls" | "classification" => Ok(Task::Classification),
            _ => Err(DataError::InvalidArgument(format!("unknown task `{s}` (expected det or cls)"))),
        }
    }
}
