#![allow(dead_code)]

pub mod data;
pub mod e2e;
pub mod grad;
pub mod invariance;
pub mod oracle;

use std::path::Path;

use action_relations::data::RelationType;
use action_relations::harness::ExperimentPlan;
use action_relations::kernel::Matrix;
use action_relations::kv::Section;
use action_relations::model::{Prediction, RelationModel};
use action_relations::synth::{SynthPaths, SynthSpec};
use action_relations::training::Target;
use rand::Rng;

/// Per-sweep training overrides used on the desk world: a narrower encoder,
/// smaller batches and a faster schedule than the defaults.
pub fn desk_train_section() -> Section {
    let mut s = Section::default();
    s.set("d_emb", 64);
    s.set("batch_size", 16);
    s.set("lr_initial", 2e-3);
    s.set("lr_after_drop", 2e-4);
    s
}

/// A three-dataset world small enough for sweeps inside unit-test budgets.
pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        actions_per_dataset: 20,
        n_concepts: 14,
        label_dim: 32,
        video_dim: 48,
        shared_concepts: 4,
        shared_actions_per_dataset: 5,
        seed,
        ..SynthSpec::default()
    }
}

/// Training overrides that keep a full sweep of [`small_spec`] under a few
/// seconds.
pub fn quick_train_section() -> Section {
    let mut s = Section::default();
    for (k, v) in [("d_emb", "16"), ("d_att", "8"), ("batch_size", "16"), ("epochs", "4"), ("lr_drop_epoch", "2")] {
        s.set(k, v);
    }
    s.set("lr_initial", 2e-3);
    s.set("lr_after_drop", 2e-4);
    s.set("k_test", 5);
    s
}

pub fn plan_for(world: &SynthPaths, output: &Path, train: Section) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(
        output.to_path_buf(),
        world.catalog.clone(),
        world.relations.clone(),
        world.labels.clone(),
        Some(world.videos.clone()),
    );
    plan.seed = 1;
    plan.random_trials = 200;
    plan.train = train;
    plan
}

pub fn random_set<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Eval-mode detection probability computed from the parts of the model.
pub fn detect(model: &RelationModel<f64>, a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let (hi, hj) = (model.encode(a).unwrap(), model.encode(b).unwrap());
    model.predict_embedded(&hi, &hj).unwrap().det().unwrap()
}

pub fn classify(model: &RelationModel<f64>, a: &Matrix<f64>, b: &Matrix<f64>) -> [f64; 4] {
    let (hi, hj) = (model.encode(a).unwrap(), model.encode(b).unwrap());
    model.predict_embedded(&hi, &hj).unwrap().cls().unwrap()
}

/// Label and video classification predictions that are each informative on
/// a disjoint half of the pairs: where one modality is confidently right the
/// other leans weakly towards a wrong class.
pub struct BlendFixture {
    pub label: Vec<Prediction>,
    pub video: Vec<Prediction>,
    pub truths: Vec<RelationType>,
}

impl BlendFixture {
    pub fn targets(&self) -> Vec<Target> {
        self.truths.iter().map(|&t| Target::Cls(t)).collect()
    }
}

pub fn complementary_fixture<R: Rng>(rng: &mut R, n: usize) -> BlendFixture {
    let mut out = BlendFixture { label: Vec::new(), video: Vec::new(), truths: Vec::new() };
    for i in 0..n {
        let y = rng.random_range(0..4);
        let wrong = (y + rng.random_range(1..4)) % 4;
        let sure = rng.random_range(0.7..0.9);
        let lean = rng.random_range(0.35..0.45);
        let mut confident = [(1.0 - sure) / 3.0; 4];
        confident[y] = sure;
        let mut misled = [(1.0 - lean) / 3.0; 4];
        misled[wrong] = lean;
        let (l, v) = if i % 2 == 0 { (confident, misled) } else { (misled, confident) };
        out.label.push(Prediction::Cls(l));
        out.video.push(Prediction::Cls(v));
        out.truths.push(RelationType::from_index(y).unwrap());
    }
    out
}

pub fn accuracy_of(preds: &[Prediction], truths: &[RelationType]) -> f64 {
    let hits = preds.iter().zip(truths).filter(|(p, t)| p.argmax() == Some(**t)).count();
    hits as f64 / truths.len() as f64
}
