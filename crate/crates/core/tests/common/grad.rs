use std::time::Instant;

use action_relations::data::{RelationType, Task};
use action_relations::embedding::Modality;
use action_relations::kernel::Matrix;
use action_relations::model::{ModelConfig, PoolingKind, RelationModel};
use action_relations::rng::rng_for;
use action_relations::training::{classification_terms, detection_terms};
use rand::Rng;

const D_EMB: usize = 8;
const K: usize = 3;
const BATCH: usize = 4;
const INPUT_DIM: usize = 5;
pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub struct Instance {
    pub model: RelationModel<f64>,
    pub sets: Vec<Matrix<f64>>,
    pub pairs: Vec<(usize, usize)>,
    pub positive: Vec<bool>,
    pub labels: Vec<RelationType>,
}

pub fn instance(task: Task, pooling: Option<PoolingKind>, seed: u64) -> Instance {
    let mut rng = rng_for(seed, &[task as u64, pooling.map_or(9, |p| p as u64)]);
    let modality = if pooling.is_some() { Modality::Video } else { Modality::Label };
    let mut config = ModelConfig::new(task, modality, INPUT_DIM);
    config.d_emb = D_EMB;
    config.d_att = 4;
    config.pooling = pooling;
    config.hidden_layers = rng.random_range(1..=2);
    let model = RelationModel::with_rng(config, &mut rng).unwrap();
    let rows = if pooling.is_some() { K } else { 1 };
    let sets: Vec<Matrix<f64>> = (0..2 * BATCH).map(|_| super::random_set(&mut rng, rows, INPUT_DIM)).collect();
    let pairs = (0..BATCH).map(|i| (2 * i, 2 * i + 1)).collect();
    let positive = (0..BATCH).map(|i| i % 2 == 0).collect();
    let labels = (0..BATCH).map(|_| RelationType::from_index(rng.random_range(0..4)).unwrap()).collect();
    Instance { model, sets, pairs, positive, labels }
}

pub fn loss(inst: &Instance, model: &mut RelationModel<f64>) -> (f64, Vec<Vec<f64>>, action_relations::model::TrainPass<f64>) {
    let (logits, pass) = model.forward_train(&inst.sets, &inst.pairs).unwrap();
    let (l, d) = match model.config.task {
        Task::Detection => detection_terms(&logits, &inst.positive),
        Task::Classification => classification_terms(&logits, &inst.labels),
    };
    (l, d, pass)
}

/// Central differences plus a kink guard. On a smooth instance the steps
/// `EPS` and `EPS / 2` agree to `O(EPS²)`; when a ReLU or max switch lies
/// inside the step they do not, and the instance is rejected. The guard
/// never consults the analytic gradient, so it cannot hide a wrong one.
fn numeric_gradient(inst: &Instance) -> Option<Vec<f64>> {
    let f = |t: &[f64]| {
        let mut m = inst.model.clone();
        m.set_flat_values(t);
        loss(inst, &mut m).0
    };
    let theta = inst.model.clone().flat_values();
    let mut work = theta.clone();
    let mut central = |i: usize, h: f64| {
        work[i] = theta[i] + h;
        let up = f(&work);
        work[i] = theta[i] - h;
        let down = f(&work);
        work[i] = theta[i];
        (up - down) / (2.0 * h)
    };
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let (full, half) = (central(i, EPS), central(i, EPS / 2.0));
        if (full - half).abs() > 0.25 * TOLERANCE * (full.abs() + half.abs()) + 1e-8 {
            return None;
        }
        out.push(full);
    }
    Some(out)
}

/// Worst relative error of the instance, or `None` if it sits on a kink.
pub fn check(task: Task, pooling: Option<PoolingKind>, seed: u64) -> Option<f64> {
    let inst = instance(task, pooling, seed);
    let numeric = numeric_gradient(&inst)?;
    let mut model = inst.model.clone();
    let (_, dlogits, pass) = loss(&inst, &mut model);
    model.zero_grad();
    model.backward(&pass, &dlogits);
    let analytic = model.flat_grads();
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    assert!(
        max_rel_error < TOLERANCE,
        "{task} {pooling:?} seed {seed}: coordinate {worst_index} analytic {} numeric {} (rel {max_rel_error})",
        analytic[worst_index],
        numeric[worst_index]
    );
    Some(max_rel_error)
}

/// Checks `count` smooth instances per encoder, skipping kinked draws.
pub fn suite(task: Task, first_seed: u64, count: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for pooling in ENCODERS {
        let (mut checked, mut seed) = (0, first_seed);
        while checked < count {
            if let Some(e) = check(task, pooling, seed) {
                worst = worst.max(e);
                checked += 1;
            }
            seed += 1;
            assert!(seed < first_seed + 10 * count as u64, "{task} {pooling:?}: too many kinked draws");
        }
    }
    worst
}

pub const ENCODERS: [Option<PoolingKind>; 4] =
    [None, Some(PoolingKind::Max), Some(PoolingKind::Mean), Some(PoolingKind::Attention)];

/// Every attention parameter receives a nonzero gradient.
pub fn attention_parameters_receive_gradient() {
    let inst = instance(Task::Detection, Some(PoolingKind::Attention), 3);
    let mut model = inst.model.clone();
    let (_, dlogits, pass) = loss(&inst, &mut model);
    model.zero_grad();
    model.backward(&pass, &dlogits);
    let params = model.pooling.as_mut().unwrap().params_mut();
    assert_eq!(params.len(), 2);
    for p in params {
        assert!(p.grad.data().iter().any(|g| *g != 0.0));
    }
}

/// Both losses over every encoder, checked within a minute.
pub fn full_suite() {
    let started = Instant::now();
    for task in [Task::Detection, Task::Classification] {
        assert!(suite(task, 0, 6) < TOLERANCE);
    }
    attention_parameters_receive_gradient();
    assert!(started.elapsed().as_secs() < 60);
}
