use super::TrainError;
use crate::data::RelationType;
use crate::kernel::{sigmoid, softmax, Scalar};

pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn clamped<T: Scalar>(p: T) -> bool {
    let p = p.f64();
    !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

fn ln_clamped<T: Scalar>(p: T) -> T {
    T::of(clamp_prob(p.f64())).ln()
}

/// Mean `-ln p` over positives plus mean `-ln(1 - p)` over negatives.
pub fn detection_loss(positives: &[f64], negatives: &[f64]) -> Result<f64, TrainError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(TrainError::InvalidArgument("detection loss needs positives and negatives".into()));
    }
    let pos = positives.iter().map(|&p| -clamp_prob(p).ln()).sum::<f64>() / positives.len() as f64;
    let neg = negatives.iter().map(|&p| -clamp_prob(1.0 - p).ln()).sum::<f64>() / negatives.len() as f64;
    Ok(pos + neg)
}

/// Mean cross-entropy against one-hot labels.
pub fn classification_loss(preds: &[[f64; 4]], labels: &[[f64; 4]]) -> Result<f64, TrainError> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(TrainError::InvalidArgument("classification loss needs aligned, non-empty lists".into()));
    }
    let mut total = 0.0;
    for (p, y) in preds.iter().zip(labels) {
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != 3 {
            return Err(TrainError::InvalidArgument(format!("label {y:?} is not one-hot")));
        }
        total -= p.iter().zip(y).map(|(&pl, &yl)| yl * clamp_prob(pl).ln()).sum::<f64>();
    }
    Ok(total / preds.len() as f64)
}

/// Detection loss of a mini-batch from logits, with its logit gradients.
/// Terms with no examples are dropped.
pub fn detection_terms<T: Scalar>(logits: &[Vec<T>], positive: &[bool]) -> (T, Vec<Vec<T>>) {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(logits.len());
    let (mut pos_sum, mut neg_sum) = (T::zero(), T::zero());
    for (z, &is_pos) in logits.iter().zip(positive) {
        let p = sigmoid(z[0]);
        let g = if is_pos {
            pos_sum += -ln_clamped(p);
            if clamped(p) { T::zero() } else { (p - T::one()) / T::of(n_pos as f64) }
        } else {
            let q = T::one() - p;
            neg_sum += -ln_clamped(q);
            if clamped(q) { T::zero() } else { p / T::of(n_neg as f64) }
        };
        grads.push(vec![g]);
    }
    if n_pos > 0 {
        loss += pos_sum / T::of(n_pos as f64);
    }
    if n_neg > 0 {
        loss += neg_sum / T::of(n_neg as f64);
    }
    (loss, grads)
}

/// Mean cross-entropy of a mini-batch from logits, with logit gradients.
pub fn classification_terms<T: Scalar>(logits: &[Vec<T>], labels: &[RelationType]) -> (T, Vec<Vec<T>>) {
    let n = T::of(logits.len().max(1) as f64);
    let mut loss = T::zero();
    let mut grads = Vec::with_capacity(logits.len());
    for (z, y) in logits.iter().zip(labels) {
        let p = softmax(z);
        let py = p[y.index()];
        loss += -ln_clamped(py);
        if clamped(py) {
            grads.push(vec![T::zero(); p.len()]);
        } else {
            grads.push(
                p.iter().enumerate().map(|(l, &pl)| (pl - if l == y.index() { T::one() } else { T::zero() }) / n).collect(),
            );
        }
    }
    (loss / n, grads)
}
