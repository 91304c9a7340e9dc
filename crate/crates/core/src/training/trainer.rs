use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;

use super::{classification_terms, detection_terms, Inputs, NegativeSampler, TrainConfig, TrainError, ValNegatives};
use crate::data::{ActionIdx, RelationType, Task, TaskSplit};
use crate::kernel::{adam_step, AdamConfig, Matrix};
use crate::model::{Prediction, RelationModel};
use crate::rng::{derive_seed, rng_for, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Det(bool),
    Cls(RelationType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Example {
    pub src: ActionIdx,
    pub dst: ActionIdx,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Seconds; zero in deterministic mode.
    pub wall_time: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub model: RelationModel<f32>,
    pub reports: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn positives(pairs: &[crate::data::LabeledPair], task: Task) -> Vec<Example> {
    pairs
        .iter()
        .map(|p| Example {
            src: p.src,
            dst: p.dst,
            target: match task {
                Task::Detection => Target::Det(true),
                Task::Classification => Target::Cls(p.relation),
            },
        })
        .collect()
}

fn with_negatives(mut pos: Vec<Example>, neg: Vec<(ActionIdx, ActionIdx)>) -> Vec<Example> {
    pos.extend(neg.into_iter().map(|(src, dst)| Example { src, dst, target: Target::Det(false) }));
    pos
}

fn val_negatives(config: &TrainConfig, split: &TaskSplit, sampler: &NegativeSampler, epoch: usize) -> Result<Vec<(ActionIdx, ActionIdx)>, TrainError> {
    let path = match config.val_negatives {
        ValNegatives::Fixed => vec![tag("val-neg")],
        ValNegatives::Resampled => vec![tag("val-neg"), epoch as u64],
    };
    let n = (config.neg_multiplier * split.val.len()).min(sampler.complement_size());
    sampler.sample(n, &mut rng_for(split.seed, &path))
}

/// Validation examples: positives plus the fixed negatives for detection,
/// labeled pairs for classification. Depends only on the split and the
/// negative multiplier, so both modalities see the same pairs.
pub fn validation_set(config: &TrainConfig, split: &TaskSplit) -> Result<Vec<Example>, TrainError> {
    let pos = positives(&split.val, split.task);
    Ok(match split.task {
        Task::Detection => with_negatives(pos, val_negatives(config, split, &NegativeSampler::new(split), 0)?),
        Task::Classification => pos,
    })
}

/// Batch loss and logit gradients in `f32`.
fn batch_terms(task: Task, logits: &[Vec<f32>], batch: &[Example]) -> (f32, Vec<Vec<f32>>) {
    match task {
        Task::Detection => {
            let flags: Vec<bool> = batch.iter().map(|e| matches!(e.target, Target::Det(true))).collect();
            detection_terms(logits, &flags)
        }
        Task::Classification => {
            let labels: Vec<RelationType> = batch
                .iter()
                .map(|e| match e.target {
                    Target::Cls(r) => r,
                    Target::Det(_) => unreachable!("detection example in classification batch"),
                })
                .collect();
            classification_terms(logits, &labels)
        }
    }
}

/// Eval-mode embeddings for the distinct actions of `pairs`.
fn embed_unique(
    model: &RelationModel<f32>,
    inputs: &Inputs,
    pairs: impl Iterator<Item = (ActionIdx, ActionIdx)>,
    k: usize,
    seed: u64,
    stream: &str,
) -> Result<IndexMap<ActionIdx, Vec<f32>>, TrainError> {
    let mut out = IndexMap::new();
    for (a, b) in pairs {
        for i in [a, b] {
            if !out.contains_key(&i) {
                let set: Matrix<f32> = inputs.set(i, k, derive_seed(seed, &[tag(stream), i as u64]))?;
                out.insert(i, model.encode(&set)?);
            }
        }
    }
    Ok(out)
}

/// Loss of an example list under the eval-mode model, in `f64`.
pub(crate) fn eval_loss(
    model: &RelationModel<f32>,
    inputs: &Inputs,
    examples: &[Example],
    k: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let emb = embed_unique(model, inputs, examples.iter().map(|e| (e.src, e.dst)), k, seed, "val-clips")?;
    let logits = examples
        .iter()
        .map(|e| Ok(model.logits(&emb[&e.src], &emb[&e.dst])?.into_iter().map(f64::from).collect()))
        .collect::<Result<Vec<Vec<f64>>, TrainError>>()?;
    Ok(match model.config.task {
        Task::Detection => {
            let flags: Vec<bool> = examples.iter().map(|e| matches!(e.target, Target::Det(true))).collect();
            detection_terms(&logits, &flags).0
        }
        Task::Classification => {
            let labels: Vec<RelationType> = examples
                .iter()
                .map(|e| match e.target {
                    Target::Cls(r) => r,
                    Target::Det(_) => RelationType::Equal,
                })
                .collect();
            classification_terms(&logits, &labels).0
        }
    })
}

/// Predictions for `pairs`. Each action is encoded once with up to `k` clips
/// drawn from a per-action seed.
pub fn predict_pairs(
    model: &RelationModel<f32>,
    inputs: &Inputs,
    pairs: &[(ActionIdx, ActionIdx)],
    k: usize,
    seed: u64,
    stream: &str,
) -> Result<Vec<Prediction>, TrainError> {
    let emb = embed_unique(model, inputs, pairs.iter().copied(), k, seed, stream)?;
    pairs.iter().map(|(a, b)| Ok(model.predict_embedded(&emb[a], &emb[b])?)).collect()
}

fn assemble_epoch(config: &TrainConfig, train_pos: &[Example], sampler: &NegativeSampler, epoch: usize) -> Result<Vec<Example>, TrainError> {
    let mut examples = match config.task {
        Task::Detection => {
            let n = config.neg_multiplier * train_pos.len();
            let mut rng = rng_for(config.seed, &[tag("neg"), epoch as u64]);
            with_negatives(train_pos.to_vec(), sampler.sample(n.min(sampler.complement_size()), &mut rng)?)
        }
        Task::Classification => train_pos.to_vec(),
    };
    examples.shuffle(&mut rng_for(config.seed, &[tag("shuffle"), epoch as u64]));
    Ok(examples)
}

/// Shuffled training examples [`train`] uses in `epoch` (1-based): the train
/// positives plus, for detection, that epoch's freshly drawn negatives.
pub fn epoch_examples(config: &TrainConfig, split: &TaskSplit, epoch: usize) -> Result<Vec<Example>, TrainError> {
    assemble_epoch(config, &positives(&split.train, config.task), &NegativeSampler::new(split), epoch)
}

/// Mini-batch Adam with the two-stage learning rate. Returns the parameters
/// of the epoch with the lowest validation loss (earliest on ties).
pub fn train(
    config: &TrainConfig,
    split: &TaskSplit,
    inputs: &Inputs,
    init: Option<RelationModel<f32>>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if split.task != config.task {
        return Err(TrainError::InvalidArgument(format!("split is for {}, config for {}", split.task, config.task)));
    }
    if inputs.modality() != config.modality {
        return Err(TrainError::InvalidArgument(format!(
            "config modality {} but store holds {} embeddings",
            config.modality,
            inputs.modality()
        )));
    }
    if split.train.is_empty() {
        return Err(TrainError::InvalidArgument("no training pairs".into()));
    }
    let mut model = match init {
        Some(m) => m,
        None => RelationModel::new(config.model_config(inputs.dim()), config.seed)?,
    };
    let sampler = NegativeSampler::new(split);
    let train_pos = positives(&split.train, config.task);
    let mut val = validation_set(config, split)?;

    let mut reports = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, RelationModel<f32>)> = None;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let lr = config.lr_at(epoch);
        let adam = AdamConfig::with_lr(lr);
        let examples = assemble_epoch(config, &train_pos, &sampler, epoch)?;

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in examples.chunks(config.batch_size).enumerate() {
            let mut slot: IndexMap<ActionIdx, usize> = IndexMap::new();
            let mut pairs = Vec::with_capacity(batch.len());
            for e in batch {
                let n = slot.len();
                let a = *slot.entry(e.src).or_insert(n);
                let n = slot.len();
                let c = *slot.entry(e.dst).or_insert(n);
                pairs.push((a, c));
            }
            let sets = slot
                .keys()
                .map(|&i| inputs.set(i, config.k_trainval, derive_seed(config.seed, &[tag("clips"), epoch as u64, b as u64, i as u64])))
                .collect::<Result<Vec<Matrix<f32>>, _>>()?;
            let diverged = |message: String| TrainError::Divergence { epoch, batch: b, message };
            let (logits, pass) = model.forward_train(&sets, &pairs)?;
            let (loss, dlogits) = batch_terms(config.task, &logits, batch);
            if !loss.is_finite() {
                return Err(diverged(format!("loss is {loss}")));
            }
            model.zero_grad();
            model.backward(&pass, &dlogits);
            adam_step(&mut model.params_mut(), &adam).map_err(|e| diverged(e.to_string()))?;
            if model.params_mut().iter().any(|p| !p.value.is_finite()) {
                return Err(diverged("non-finite parameters".into()));
            }
            loss_sum += f64::from(loss);
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        if config.task == Task::Detection && config.val_negatives == ValNegatives::Resampled {
            val = with_negatives(positives(&split.val, config.task), val_negatives(config, split, &sampler, epoch)?);
        }
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            eval_loss(&model, inputs, &val, config.k_trainval, config.seed)?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::Divergence { epoch, batch: batches, message: format!("validation loss is {val_loss}") });
        }
        if best.as_ref().is_none_or(|(_, l, _)| val_loss < *l) {
            best = Some((epoch, val_loss, model.clone()));
        }
        let wall_time = if config.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
        reports.push(EpochReport { epoch, lr, train_loss, val_loss, wall_time, selected: false });
    }
    let (best_epoch, best_val_loss, model) = best.expect("at least one epoch");
    reports[best_epoch - 1].selected = true;
    Ok(TrainOutcome { model, reports, best_epoch, best_val_loss })
}
