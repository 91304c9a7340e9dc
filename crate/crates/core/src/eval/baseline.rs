use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::metrics::{average_precision, f1_at_threshold};
use super::EvalError;
use crate::data::RelationType;
use crate::rng::{rng_for, tag};

const COUNT: usize = RelationType::COUNT;

/// Monte-Carlo means of a predictor that scores every pair `U(0, 1)` and
/// calls it related with the training prior `prior`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDetection {
    pub prior: f64,
    pub trials: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
}

/// Training prior of relatedness: positives over positives plus sampled
/// negatives per epoch.
pub fn detection_prior(train_positives: usize, negatives: usize) -> Result<f64, EvalError> {
    if train_positives == 0 {
        return Err(EvalError::InvalidArgument("no training positives".into()));
    }
    Ok(train_positives as f64 / (train_positives + negatives) as f64)
}

pub fn random_detection(prior: f64, truths: &[bool], seed: u64, trials: usize) -> Result<RandomDetection, EvalError> {
    if trials == 0 {
        return Err(EvalError::InvalidArgument("zero trials".into()));
    }
    if !(0.0..=1.0).contains(&prior) {
        return Err(EvalError::InvalidArgument(format!("prior {prior} outside [0, 1]")));
    }
    let mut sums = [0.0; 4];
    let mut scores = vec![0.0; truths.len()];
    for trial in 0..trials {
        let mut rng = rng_for(seed, &[tag("random-det"), trial as u64]);
        scores.iter_mut().for_each(|s| *s = rng.random::<f64>());
        let prf = f1_at_threshold(&scores, truths, 1.0 - prior)?;
        let ap = average_precision(&scores, truths)?;
        for (s, v) in sums.iter_mut().zip([prf.precision, prf.recall, prf.f1, ap]) {
            *s += v;
        }
    }
    let n = trials as f64;
    Ok(RandomDetection { prior, trials, precision: sums[0] / n, recall: sums[1] / n, f1: sums[2] / n, ap: sums[3] / n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomClassification {
    pub train_prior: [f64; COUNT],
    pub test_prior: [f64; COUNT],
    /// `Σ_l p_train(l) · p_test(l)`.
    pub analytic: f64,
    /// Mean accuracy over `trials` predictors sampling from the train prior.
    pub monte_carlo: f64,
    pub trials: usize,
}

pub fn expected_accuracy(train_prior: &[f64; COUNT], test_prior: &[f64; COUNT]) -> f64 {
    train_prior.iter().zip(test_prior).map(|(a, b)| a * b).sum()
}

pub fn prior_of(truths: &[RelationType]) -> Result<[f64; COUNT], EvalError> {
    if truths.is_empty() {
        return Err(EvalError::Empty("truths"));
    }
    let mut p = [0.0; COUNT];
    for t in truths {
        p[t.index()] += 1.0;
    }
    p.iter_mut().for_each(|v| *v /= truths.len() as f64);
    Ok(p)
}

pub fn random_classification(
    train_prior: &[f64; COUNT],
    truths: &[RelationType],
    seed: u64,
    trials: usize,
) -> Result<RandomClassification, EvalError> {
    if trials == 0 {
        return Err(EvalError::InvalidArgument("zero trials".into()));
    }
    let test_prior = prior_of(truths)?;
    let dist = WeightedIndex::new(train_prior)
        .map_err(|e| EvalError::InvalidArgument(format!("train prior {train_prior:?}: {e}")))?;
    let mut total = 0.0;
    for trial in 0..trials {
        let mut rng = rng_for(seed, &[tag("random-cls"), trial as u64]);
        let hits = truths.iter().filter(|t| dist.sample(&mut rng) == t.index()).count();
        total += hits as f64 / truths.len() as f64;
    }
    Ok(RandomClassification {
        train_prior: *train_prior,
        test_prior,
        analytic: expected_accuracy(train_prior, &test_prior),
        monte_carlo: total / trials as f64,
        trials,
    })
}
