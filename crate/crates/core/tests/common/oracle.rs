use action_relations::data::RelationType;
use action_relations::eval::{
    average_precision, detection_prior, expected_accuracy, f1_at_threshold, random_classification, random_detection,
};
use action_relations::rng::rng_for;
use rand::Rng;

/// Precision at each positive from counting: how many items score at least
/// as high, and how many of those are positive. Scores are tie-free.
fn ap_oracle(scores: &[f64], truths: &[bool]) -> f64 {
    let mut positives: Vec<f64> = scores.iter().zip(truths).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
    positives.sort_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    for &s in &positives {
        let ranked = scores.iter().filter(|&&x| x >= s).count();
        let hits = positives.iter().filter(|&&x| x >= s).count();
        sum += hits as f64 / ranked as f64;
    }
    sum / positives.len() as f64
}

fn f1_oracle(scores: &[f64], truths: &[bool], t: f64) -> (f64, f64, f64) {
    let count = |pred: bool, truth: bool| scores.iter().zip(truths).filter(|(&s, &y)| (s >= t) == pred && y == truth).count();
    let (tp, fp, fn_) = (count(true, true), count(true, false), count(false, true));
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn ap_and_f1_match_brute_force() {
    let mut rng = rng_for(11, &[]);
    for trial in 0..1000 {
        let n = rng.random_range(1..=50);
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut truths: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let threshold = rng.random::<f64>();
        let prf = f1_at_threshold(&scores, &truths, threshold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), f1_oracle(&scores, &truths, threshold), "trial {trial}");
        if !truths.contains(&true) {
            assert!(average_precision(&scores, &truths).is_err());
            truths[rng.random_range(0..n)] = true;
        }
        assert_eq!(average_precision(&scores, &truths).unwrap(), ap_oracle(&scores, &truths), "trial {trial}");
    }
}

pub fn worked_examples() {
    let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
    assert_eq!(format!("{ap:.4}"), "0.8333");
    let prf = f1_at_threshold(&[0.9, 0.8, 0.7, 0.2], &[true, true, false, true], 0.5).unwrap();
    assert_eq!(format!("{:.4}", prf.f1), "0.6667");
}

const TRAIN_PRIOR: [f64; 4] = [0.129, 0.336, 0.267, 0.267];
const TEST_PRIOR: [f64; 4] = [0.107, 0.605, 0.143, 0.143];

/// Labels with the given class shares out of `n`. The shares above sum to
/// 0.998, so 998 labels come back for `n = 1000`.
fn labels_with(prior: &[f64; 4], n: usize) -> Vec<RelationType> {
    let mut out = Vec::new();
    for (i, p) in prior.iter().enumerate() {
        let k = (p * n as f64).round() as usize;
        out.extend(std::iter::repeat_n(RelationType::from_index(i).unwrap(), k));
    }
    out
}

pub fn random_classification_matches_dot_product() {
    let dot: f64 = TRAIN_PRIOR.iter().zip(&TEST_PRIOR).map(|(a, b)| a * b).sum();
    assert!((expected_accuracy(&TRAIN_PRIOR, &TEST_PRIOR) - dot).abs() < 1e-4);
    assert!((dot - 0.2944).abs() < 1e-3, "{dot}");
    let truths = labels_with(&TEST_PRIOR, 1000);
    let r = random_classification(&TRAIN_PRIOR, &truths, 3, 10_000).unwrap();
    let empirical: f64 = TRAIN_PRIOR.iter().zip(&r.test_prior).map(|(a, b)| a * b).sum();
    assert!((r.analytic - empirical).abs() < 1e-12);
    assert!((r.monte_carlo - r.analytic).abs() < 0.01, "{} vs {}", r.monte_carlo, r.analytic);
    assert!((r.monte_carlo - dot).abs() < 0.01, "{} vs {dot}", r.monte_carlo);
}

pub fn random_detection_ap_tracks_prevalence() {
    let n = 20_000;
    let positives = (0.006 * n as f64) as usize;
    let truths: Vec<bool> = (0..n).map(|i| i % (n / positives) == 0).collect();
    let prevalence = truths.iter().filter(|&&t| t).count() as f64 / n as f64;
    assert!((prevalence - 0.006).abs() < 1e-4);
    let r = random_detection(detection_prior(1, 5).unwrap(), &truths, 9, 50).unwrap();
    assert!((0.003..=0.010).contains(&r.ap), "{}", r.ap);
}
