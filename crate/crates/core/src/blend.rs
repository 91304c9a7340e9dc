//! Logistic blending of label and video predictions.
//!
//! The blend sees the two modality outputs as probabilities and applies one
//! affine map followed by a sigmoid (detection) or softmax (classification):
//! `σ(B · concat(ŷ_label, ŷ_video) + b)`.

use crate::data::{RelationType, Task};
use crate::kernel::{adam_step, sigmoid, softmax, AdamConfig, Checkpoint, KernelError, Matrix, ParamTensor};
use crate::model::Prediction;
use crate::training::{classification_terms, detection_terms, Target};

pub const BLEND_STEPS: usize = 1000;
pub const BLEND_LR: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum BlendError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn outputs(task: Task) -> usize {
    match task {
        Task::Detection => 1,
        Task::Classification => RelationType::COUNT,
    }
}

/// `B` is `out × 2·out` and `b` has `out` entries, where `out` is 1 for
/// detection and 4 for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendParams {
    task: Task,
    weight: Matrix<f64>,
    bias: Vec<f64>,
}

impl BlendParams {
    pub fn zeros(task: Task) -> Self {
        let out = outputs(task);
        BlendParams { task, weight: Matrix::zeros(out, 2 * out), bias: vec![0.0; out] }
    }

    pub fn new(task: Task, weight: Matrix<f64>, bias: Vec<f64>) -> Result<Self, BlendError> {
        let out = outputs(task);
        if weight.shape() != (out, 2 * out) || bias.len() != out {
            return Err(BlendError::InvalidArgument(format!(
                "{task} blend needs B {out}x{} and b of length {out}, got B {}x{} and b of length {}",
                2 * out,
                weight.rows(),
                weight.cols(),
                bias.len()
            )));
        }
        Ok(BlendParams { task, weight, bias })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn weight(&self) -> &Matrix<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("blend.B", &self.weight);
        ck.insert_vec("blend.b", &self.bias);
        ck
    }

    pub fn from_checkpoint(task: Task, ck: &Checkpoint) -> Result<Self, BlendError> {
        let out = outputs(task);
        let weight = ck.take("blend.B", (out, 2 * out))?;
        let bias = ck.take_vec("blend.b", out)?;
        Ok(BlendParams { task, weight, bias })
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weight.rows())
            .map(|r| self.weight.row(r).iter().zip(x).fold(self.bias[r], |acc, (w, v)| acc + w * v))
            .collect()
    }
}

fn features(task: Task, label: &Prediction, video: &Prediction) -> Result<Vec<f64>, BlendError> {
    match (task, label, video) {
        (Task::Detection, Prediction::Det(a), Prediction::Det(b)) => Ok(vec![*a, *b]),
        (Task::Classification, Prediction::Cls(a), Prediction::Cls(b)) => Ok(a.iter().chain(b).copied().collect()),
        _ => Err(BlendError::InvalidArgument(format!(
            "{task} blend got {} and {} predictions",
            kind(label),
            kind(video)
        ))),
    }
}

fn kind(p: &Prediction) -> &'static str {
    match p {
        Prediction::Det(_) => "detection",
        Prediction::Cls(_) => "classification",
    }
}

pub fn blend(params: &BlendParams, label: &Prediction, video: &Prediction) -> Result<Prediction, BlendError> {
    let z = params.logits(&features(params.task, label, video)?);
    Ok(match params.task {
        Task::Detection => Prediction::Det(sigmoid(z[0])),
        Task::Classification => {
            let p = softmax(&z);
            Prediction::Cls([p[0], p[1], p[2], p[3]])
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendFit {
    pub params: BlendParams,
    /// Validation loss of the fitted blend.
    pub val_loss: f64,
}

fn loss_and_grad(params: &BlendParams, x: &[Vec<f64>], targets: &[Target]) -> (f64, Vec<Vec<f64>>) {
    let logits: Vec<Vec<f64>> = x.iter().map(|v| params.logits(v)).collect();
    match params.task {
        Task::Detection => {
            let pos: Vec<bool> = targets.iter().map(|t| matches!(t, Target::Det(true))).collect();
            detection_terms(&logits, &pos)
        }
        Task::Classification => {
            let labels: Vec<RelationType> = targets
                .iter()
                .map(|t| match t {
                    Target::Cls(r) => *r,
                    Target::Det(_) => unreachable!("targets checked against the task"),
                })
                .collect();
            classification_terms(&logits, &labels)
        }
    }
}

/// Full-batch Adam from zero initialisation on validation predictions.
pub fn fit_blend(
    task: Task,
    label: &[Prediction],
    video: &[Prediction],
    targets: &[Target],
) -> Result<BlendFit, BlendError> {
    if label.is_empty() {
        return Err(BlendError::InvalidArgument("empty validation set".into()));
    }
    if label.len() != video.len() || label.len() != targets.len() {
        return Err(BlendError::InvalidArgument(format!(
            "{} label predictions, {} video predictions, {} targets",
            label.len(),
            video.len(),
            targets.len()
        )));
    }
    let x = label.iter().zip(video).map(|(a, b)| features(task, a, b)).collect::<Result<Vec<_>, _>>()?;
    for t in targets {
        let ok = matches!((task, t), (Task::Detection, Target::Det(_)) | (Task::Classification, Target::Cls(_)));
        if !ok {
            return Err(BlendError::InvalidArgument(format!("{task} blend got target {t:?}")));
        }
    }
    if task == Task::Detection {
        let pos = targets.iter().filter(|t| matches!(t, Target::Det(true))).count();
        if pos == 0 || pos == targets.len() {
            return Err(BlendError::InvalidArgument("detection blend needs positives and negatives".into()));
        }
    }

    let mut params = BlendParams::zeros(task);
    let out = outputs(task);
    let mut w = ParamTensor::new(params.weight.clone());
    let mut b = ParamTensor::new(Matrix::row_vector(params.bias.clone()));
    let cfg = AdamConfig::with_lr(BLEND_LR);
    for _ in 0..BLEND_STEPS {
        let (_, dz) = loss_and_grad(&params, &x, targets);
        w.zero_grad();
        b.zero_grad();
        for (xi, dzi) in x.iter().zip(&dz) {
            for r in 0..out {
                let g = dzi[r];
                for (gw, &v) in w.grad.row_mut(r).iter_mut().zip(xi) {
                    *gw += g * v;
                }
                b.grad.data_mut()[r] += g;
            }
        }
        adam_step(&mut [&mut w, &mut b], &cfg)?;
        params.weight = w.value.clone();
        params.bias = b.value.data().to_vec();
    }
    let (val_loss, _) = loss_and_grad(&params, &x, targets);
    Ok(BlendFit { params, val_loss })
}
