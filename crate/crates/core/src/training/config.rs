use std::fmt;
use std::str::FromStr;

use super::TrainError;
use crate::data::Task;
use crate::embedding::Modality;
use crate::kv::Section;
use crate::model::{ModelConfig, PoolingKind, DEFAULT_D_ATT, DEFAULT_D_EMB};

/// How validation detection negatives are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValNegatives {
    /// One seed-derived set, shared by every epoch and grid point.
    Fixed,
    /// Redrawn every epoch.
    Resampled,
}

impl fmt::Display for ValNegatives {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValNegatives::Fixed => "fixed",
            ValNegatives::Resampled => "resampled",
        })
    }
}

impl FromStr for ValNegatives {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(ValNegatives::Fixed),
            "resampled" => Ok(ValNegatives::Resampled),
            other => Err(format!("expected fixed or resampled, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub modality: Modality,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    /// Last epoch (1-based) trained at `lr_initial`.
    pub lr_drop_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub neg_multiplier: usize,
    pub k_trainval: usize,
    pub k_test: usize,
    pub seed: u64,
    pub pooling: Option<PoolingKind>,
    pub hidden_layers: usize,
    pub d_emb: usize,
    pub d_att: usize,
    pub val_negatives: ValNegatives,
    /// Zeroes wall-clock fields so reports are byte-reproducible.
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn new(task: Task, modality: Modality) -> Self {
        TrainConfig {
            task,
            modality,
            lr_initial: 5e-4,
            lr_after_drop: 5e-5,
            lr_drop_epoch: 5,
            batch_size: 64,
            epochs: 20,
            neg_multiplier: 5,
            k_trainval: 10,
            k_test: 30,
            seed: 0,
            pooling: (modality == Modality::Video).then_some(PoolingKind::Mean),
            hidden_layers: 1,
            d_emb: DEFAULT_D_EMB,
            d_att: DEFAULT_D_ATT,
            val_negatives: ValNegatives::Fixed,
            deterministic: false,
        }
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_drop_epoch {
            self.lr_initial
        } else {
            self.lr_after_drop
        }
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            task: self.task,
            modality: self.modality,
            input_dim,
            d_emb: self.d_emb,
            hidden_layers: self.hidden_layers,
            pooling: self.pooling,
            d_att: self.d_att,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("k_trainval", self.k_trainval),
            ("k_test", self.k_test),
            ("d_emb", self.d_emb),
            ("d_att", self.d_att),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::InvalidArgument(format!("{name} must be positive")));
        }
        if self.task == Task::Detection && self.neg_multiplier == 0 {
            return Err(TrainError::InvalidArgument("neg_multiplier must be positive for detection".into()));
        }
        if !(self.lr_initial >= 0.0 && self.lr_after_drop >= 0.0) {
            return Err(TrainError::InvalidArgument("learning rates must be non-negative".into()));
        }
        self.model_config(1).validate()?;
        Ok(())
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::default();
        s.set("task", self.task);
        s.set("modality", self.modality);
        s.set("lr_initial", self.lr_initial);
        s.set("lr_after_drop", self.lr_after_drop);
        s.set("lr_drop_epoch", self.lr_drop_epoch);
        s.set("batch_size", self.batch_size);
        s.set("epochs", self.epochs);
        s.set("neg_multiplier", self.neg_multiplier);
        s.set("k_trainval", self.k_trainval);
        s.set("k_test", self.k_test);
        s.set("seed", self.seed);
        s.set("pooling", self.pooling.map_or("none", PoolingKind::name));
        s.set("hidden_layers", self.hidden_layers);
        s.set("d_emb", self.d_emb);
        s.set("d_att", self.d_att);
        s.set("val_negatives", self.val_negatives);
        s.set("deterministic", self.deterministic);
        s
    }

    /// Reads keys from `s` on top of `self`; `task` and `modality` may be
    /// overridden too. Unknown keys are rejected.
    pub fn apply_section(mut self, s: &Section) -> Result<Self, TrainError> {
        for (key, value) in &s.entries {
            let bad = |reason: String| crate::kv::KvError::Value { key: key.clone(), value: value.clone(), reason };
            match key.as_str() {
                "task" => self.task = value.parse().map_err(|e: crate::data::DataError| bad(e.to_string()))?,
                "modality" => {
                    self.modality = value.parse().map_err(|e: crate::embedding::EmbeddingError| bad(e.to_string()))?;
                    if self.modality == Modality::Label {
                        self.pooling = None;
                    } else if self.pooling.is_none() {
                        self.pooling = Some(PoolingKind::Mean);
                    }
                }
                "lr_initial" => self.lr_initial = s.parse(key)?.unwrap(),
                "lr_after_drop" => self.lr_after_drop = s.parse(key)?.unwrap(),
                "lr_drop_epoch" => self.lr_drop_epoch = s.parse(key)?.unwrap(),
                "batch_size" => self.batch_size = s.parse(key)?.unwrap(),
                "epochs" => self.epochs = s.parse(key)?.unwrap(),
                "neg_multiplier" => self.neg_multiplier = s.parse(key)?.unwrap(),
                "k_trainval" => self.k_trainval = s.parse(key)?.unwrap(),
                "k_test" => self.k_test = s.parse(key)?.unwrap(),
                "seed" => self.seed = s.parse(key)?.unwrap(),
                "pooling" => {
                    self.pooling = match value.as_str() {
                        "none" => None,
                        p => Some(p.parse().map_err(bad)?),
                    }
                }
                "hidden_layers" => self.hidden_layers = s.parse(key)?.unwrap(),
                "d_emb" => self.d_emb = s.parse(key)?.unwrap(),
                "d_att" => self.d_att = s.parse(key)?.unwrap(),
                "val_negatives" => self.val_negatives = value.parse().map_err(bad)?,
                "deterministic" => self.deterministic = s.parse(key)?.unwrap(),
                _ => return Err(crate::kv::KvError::Unknown(key.clone()).into()),
            }
        }
        Ok(self)
    }

    pub fn from_section(s: &Section) -> Result<Self, TrainError> {
        let task = s.require("task")?.parse().map_err(|e: crate::data::DataError| TrainError::InvalidArgument(e.to_string()))?;
        let modality = s
            .require("modality")?
            .parse()
            .map_err(|e: crate::embedding::EmbeddingError| TrainError::InvalidArgument(e.to_string()))?;
        TrainConfig::new(task, modality).apply_section(s)
    }
}
