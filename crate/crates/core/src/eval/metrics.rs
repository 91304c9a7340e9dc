use std::fmt;
use std::str::FromStr;

use super::EvalError;
use crate::data::RelationType;

const COUNT: usize = RelationType::COUNT;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_scores(scores: &[f64], truths: &[bool]) -> Result<(), EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty("scores"));
    }
    if scores.len() != truths.len() {
        return Err(EvalError::InvalidArgument(format!("{} scores for {} truths", scores.len(), truths.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::InvalidArgument(format!("score {i} is not finite")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 with `score >= threshold` as positive. Undefined
/// ratios count as 0.
pub fn f1_at_threshold(scores: &[f64], truths: &[bool], threshold: f64) -> Result<Prf, EvalError> {
    check_scores(scores, truths)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &t) in scores.iter().zip(truths) {
        match (s >= threshold, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(Prf { precision, recall, f1 })
}

/// Indices ordered by descending score, ties by original index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Mean over true positives of the precision at each positive's rank.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> Result<f64, EvalError> {
    check_scores(scores, truths)?;
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(EvalError::UndefinedMetric("average precision needs at least one positive".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if truths[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// How a detection threshold was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Fixed(f64),
    /// The F1-maximising score on validation predictions.
    ValTuned,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Fixed(0.5)
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Fixed(t) => write!(f, "fixed-{t}"),
            ThresholdRule::ValTuned => f.write_str("val-tuned"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "val-tuned" {
            return Ok(ThresholdRule::ValTuned);
        }
        let t = s.strip_prefix("fixed-").unwrap_or(s);
        match t.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(ThresholdRule::Fixed(v)),
            _ => Err(EvalError::InvalidArgument(format!("`{s}` is neither `val-tuned` nor a threshold in [0, 1]"))),
        }
    }
}

/// Candidate thresholds are the distinct validation scores; the highest one
/// reaching the maximum F1 wins.
pub fn tune_threshold(scores: &[f64], truths: &[bool]) -> Result<f64, EvalError> {
    check_scores(scores, truths)?;
    let mut candidates: Vec<f64> = scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, 0.5);
    for t in candidates {
        let f1 = f1_at_threshold(scores, truths, t)?.f1;
        if f1 > best.0 {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
}

pub fn evaluate_detection(scores: &[f64], truths: &[bool], threshold: f64, rule: ThresholdRule) -> Result<DetectionResult, EvalError> {
    let prf = f1_at_threshold(scores, truths, threshold)?;
    let ap = average_precision(scores, truths)?;
    Ok(DetectionResult { threshold, rule, precision: prf.precision, recall: prf.recall, f1: prf.f1, ap })
}

/// Argmax with ties going to the lowest index.
pub fn argmax(p: &[f64; COUNT]) -> usize {
    let mut best = 0;
    for i in 1..COUNT {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// `confusion[truth][predicted]` counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub accuracy: f64,
    pub confusion: [[usize; COUNT]; COUNT],
}

impl ClassificationResult {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

pub fn accuracy(preds: &[[f64; COUNT]], truths: &[RelationType]) -> Result<ClassificationResult, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty("predictions"));
    }
    if preds.len() != truths.len() {
        return Err(EvalError::InvalidArgument(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    let mut confusion = [[0usize; COUNT]; COUNT];
    for (p, t) in preds.iter().zip(truths) {
        confusion[t.index()][argmax(p)] += 1;
    }
    let correct: usize = (0..COUNT).map(|i| confusion[i][i]).sum();
    Ok(ClassificationResult { accuracy: correct as f64 / preds.len() as f64, confusion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        let scores = [0.9, 0.8, 0.7, 0.2];
        let truths = [true, true, false, true];
        let r = f1_at_threshold(&scores, &truths, 0.5).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.4}", r.f1), "0.6667");

        let all = f1_at_threshold(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!(all.f1, 1.0);

        let none = f1_at_threshold(&[0.2, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(f1_at_threshold(&[], &[], 0.5).is_err());
        assert!(f1_at_threshold(&[0.5], &[true], 1.5).is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let r = f1_at_threshold(&[0.5], &[true], 0.5).unwrap();
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(format!("{ap:.4}"), "0.8333");
        assert_eq!(average_precision(&[0.3, 0.9, 0.1], &[false, true, false]).unwrap(), 1.0);
        assert!(matches!(average_precision(&[0.3], &[false]), Err(EvalError::UndefinedMetric(_))));
    }

    #[test]
    fn ap_ties_follow_input_order() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_examples() {
        let onehot = |i: usize| {
            let mut p = [0.0; COUNT];
            p[i] = 1.0;
            p
        };
        let truths: Vec<RelationType> = [0, 1, 1, 1, 2, 3, 3, 1, 0, 2].iter().map(|&i| RelationType::from_index(i).unwrap()).collect();
        let predicted = [0, 1, 1, 2, 2, 3, 0, 1, 1, 2];
        let preds: Vec<[f64; COUNT]> = predicted.iter().map(|&i| onehot(i)).collect();
        let r = accuracy(&preds, &truths).unwrap();
        assert_eq!(r.accuracy, 0.7);
        assert_eq!(r.confusion, [[1, 1, 0, 0], [0, 3, 1, 0], [0, 0, 2, 0], [1, 0, 0, 1]]);
        assert_eq!(r.total(), 10);
        for (t, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), truths.iter().filter(|x| x.index() == t).count());
        }
        assert_eq!(argmax(&[0.25; COUNT]), 0);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn tuned_threshold_separates_validation() {
        let t = tune_threshold(&[0.9, 0.7, 0.4, 0.3, 0.2], &[true, true, false, false, false]).unwrap();
        assert_eq!(t, 0.7);
        assert_eq!("val-tuned".parse::<ThresholdRule>().unwrap(), ThresholdRule::ValTuned);
        assert_eq!("0.5".parse::<ThresholdRule>().unwrap(), ThresholdRule::Fixed(0.5));
        assert_eq!(ThresholdRule::Fixed(0.5).to_string().parse::<ThresholdRule>().unwrap(), ThresholdRule::Fixed(0.5));
        assert!("half".parse::<ThresholdRule>().is_err());
    }
}
