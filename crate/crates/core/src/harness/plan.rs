use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::HarnessError;
use crate::data::Task;
use crate::embedding::Modality;
use crate::eval::ThresholdRule;
use crate::kv::{KvDocument, KvError, Section};
use crate::training::TrainConfig;

pub const DEFAULT_RANDOM_TRIALS: usize = 1000;

const ROOT_KEYS: [&str; 12] = [
    "seed",
    "output",
    "catalog",
    "relations",
    "label_store",
    "video_store",
    "datasets",
    "targets",
    "val_fraction",
    "threshold",
    "random_trials",
    "deterministic",
];

/// A leave-one-dataset-out sweep. Relative paths resolve against the plan
/// file's directory.
///
/// ```text
/// seed = 1
/// output = runs/desk
/// catalog = world/catalog.csv
/// relations = world/relations.csv
/// label_store = world/label.aemb
/// video_store = world/video.aemb
///
/// [train]
/// d_emb = 64
///
/// [target.ds1]
/// epochs = 30
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub seed: u64,
    pub output: PathBuf,
    pub catalog: PathBuf,
    pub relations: PathBuf,
    pub label_store: PathBuf,
    pub video_store: Option<PathBuf>,
    /// Datasets taking part; empty means every dataset in the catalog.
    pub datasets: Vec<String>,
    /// Held-out datasets to run; empty means every participating dataset.
    pub targets: Vec<String>,
    pub val_fraction: f64,
    pub threshold: ThresholdRule,
    pub random_trials: usize,
    pub deterministic: bool,
    /// Training overrides shared by all targets.
    pub train: Section,
    /// Per-target overrides applied after `train`.
    pub target_overrides: IndexMap<String, Section>,
}

impl ExperimentPlan {
    pub fn new(output: PathBuf, catalog: PathBuf, relations: PathBuf, label_store: PathBuf, video_store: Option<PathBuf>) -> Self {
        ExperimentPlan {
            seed: 0,
            output,
            catalog,
            relations,
            label_store,
            video_store,
            datasets: Vec::new(),
            targets: Vec::new(),
            val_fraction: crate::data::DEFAULT_VAL_FRACTION,
            threshold: ThresholdRule::default(),
            random_trials: DEFAULT_RANDOM_TRIALS,
            deterministic: true,
            train: Section::default(),
            target_overrides: IndexMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let doc = KvDocument::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_document(&doc, base)
    }

    pub fn from_document(doc: &KvDocument, base: &Path) -> Result<Self, HarnessError> {
        let root = &doc.root;
        if let Some(k) = root.entries.keys().find(|k| !ROOT_KEYS.contains(&k.as_str())) {
            return Err(KvError::Unknown(k.clone()).into());
        }
        let path = |key: &str| -> Result<PathBuf, HarnessError> { Ok(base.join(root.require(key)?)) };
        let mut plan = ExperimentPlan::new(
            path("output")?,
            path("catalog")?,
            path("relations")?,
            path("label_store")?,
            root.get("video_store").map(|p| base.join(p)),
        );
        plan.seed = root.parse_or("seed", 0)?;
        plan.datasets = root.list("datasets").unwrap_or_default();
        plan.targets = root.list("targets").unwrap_or_default();
        plan.val_fraction = root.parse_or("val_fraction", plan.val_fraction)?;
        plan.random_trials = root.parse_or("random_trials", plan.random_trials)?;
        plan.deterministic = root.parse_or("deterministic", plan.deterministic)?;
        if let Some(t) = root.get("threshold") {
            plan.threshold = t.parse()?;
        }
        for (name, section) in &doc.sections {
            if name == "train" {
                plan.train = section.clone();
            } else if let Some(t) = name.strip_prefix("target.") {
                plan.target_overrides.insert(t.to_string(), section.clone());
            } else {
                return Err(HarnessError::Plan(format!("unknown section [{name}]")));
            }
        }
        plan.check_overrides()?;
        Ok(plan)
    }

    /// Paths are written as given; the document reads back to the same plan
    /// when `base` is the directory they were resolved against.
    pub fn to_document(&self) -> KvDocument {
        let mut doc = KvDocument::default();
        let r = &mut doc.root;
        r.set("seed", self.seed);
        r.set("output", self.output.display());
        r.set("catalog", self.catalog.display());
        r.set("relations", self.relations.display());
        r.set("label_store", self.label_store.display());
        if let Some(v) = &self.video_store {
            r.set("video_store", v.display());
        }
        if !self.datasets.is_empty() {
            r.set("datasets", self.datasets.join(", "));
        }
        if !self.targets.is_empty() {
            r.set("targets", self.targets.join(", "));
        }
        r.set("val_fraction", self.val_fraction);
        r.set("threshold", self.threshold);
        r.set("random_trials", self.random_trials);
        r.set("deterministic", self.deterministic);
        if !self.train.entries.is_empty() {
            doc.sections.insert("train".into(), self.train.clone());
        }
        for (t, s) in &self.target_overrides {
            doc.sections.insert(format!("target.{t}"), s.clone());
        }
        doc
    }

    fn check_overrides(&self) -> Result<(), HarnessError> {
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            return Err(HarnessError::Plan(format!("val_fraction {} outside (0, 1)", self.val_fraction)));
        }
        if self.random_trials == 0 {
            return Err(HarnessError::Plan("random_trials must be positive".into()));
        }
        for s in std::iter::once(&self.train).chain(self.target_overrides.values()) {
            if let Some(k) = ["task", "modality", "seed", "deterministic"].iter().find(|k| s.get(k).is_some()) {
                return Err(HarnessError::Plan(format!("training sections may not set `{k}`; it is fixed by the sweep")));
            }
        }
        for task in [Task::Detection, Task::Classification] {
            for modality in [Modality::Label, Modality::Video] {
                for t in self.target_overrides.keys() {
                    self.train_config(t, task, modality)?;
                }
                self.train_config("", task, modality)?;
            }
        }
        Ok(())
    }

    /// Base training config of one cell: defaults, then `[train]`, then
    /// `[target.<name>]`, with the plan seed and determinism flag.
    pub fn train_config(&self, target: &str, task: Task, modality: Modality) -> Result<TrainConfig, HarnessError> {
        let mut c = TrainConfig::new(task, modality).apply_section(&self.train)?;
        if let Some(s) = self.target_overrides.get(target) {
            c = c.apply_section(s)?;
        }
        c.seed = self.seed;
        c.deterministic = self.deterministic;
        c.validate()?;
        Ok(c)
    }
}
