use std::path::Path;
use std::process::Command;
use std::time::Instant;

use action_relations::blend::{blend, fit_blend};
use action_relations::data::Task;
use action_relations::eval::{Approach, Report, DET_METRICS};
use action_relations::harness::{run_experiment, RunOptions};
use action_relations::kv::KvDocument;
use action_relations::model::Prediction;
use action_relations::rng::rng_for;
use action_relations::synth::{generate, SynthPaths, SynthSpec};

use super::{accuracy_of, complementary_fixture, desk_train_section, plan_for, quick_train_section, small_spec};

pub fn write_world(spec: &SynthSpec, dir: &Path) -> SynthPaths {
    generate(spec).unwrap().write(dir).unwrap()
}

/// Every per-target threshold on a finished desk sweep. Returns the list of
/// violations so a caller can print them all.
pub fn desk_violations(report: &Report) -> Vec<String> {
    let mut bad = Vec::new();
    let targets = report.targets();
    if targets.len() != 3 {
        bad.push(format!("expected 3 targets, got {targets:?}"));
    }
    let mut need = |target: &str, what: &str, ok: Option<bool>| match ok {
        Some(true) => {}
        Some(false) => bad.push(format!("{target}: {what}")),
        None => bad.push(format!("{target}: {what} (missing value)")),
    };
    for t in &targets {
        let v = |task, approach, metric| report.value(t, task, approach, metric);
        let label_f1 = v(Task::Detection, Approach::LabelOnly, "f1");
        need(t, &format!("label-only F1 {label_f1:?} >= 0.90"), label_f1.map(|x| x >= 0.90));
        let video_f1 = v(Task::Detection, Approach::VideoOnly, "f1");
        need(t, &format!("video-only F1 {video_f1:?} >= 0.60"), video_f1.map(|x| x >= 0.60));
        let (la, va) = (v(Task::Classification, Approach::LabelOnly, "accuracy"), v(Task::Classification, Approach::VideoOnly, "accuracy"));
        need(t, &format!("label-only accuracy {la:?} >= video-only {va:?}"), la.zip(va).map(|(a, b)| a >= b));
        for approach in [Approach::LabelOnly, Approach::VideoOnly, Approach::Blending] {
            let metrics = DET_METRICS.iter().map(|m| (Task::Detection, *m)).chain([(Task::Classification, "accuracy")]);
            for (task, metric) in metrics {
                let (a, r) = (v(task, approach, metric), v(task, Approach::Random, metric));
                need(t, &format!("{approach} {task} {metric} {a:?} > random {r:?}"), a.zip(r).map(|(a, r)| a > r));
            }
        }
    }
    bad
}

/// The full sweep on the default desk world. Returns the report and seconds.
pub fn desk_sweep(dir: &Path) -> (Report, f64) {
    let world = write_world(&SynthSpec::default(), &dir.join("world"));
    let plan = plan_for(&world, &dir.join("out"), desk_train_section());
    let started = Instant::now();
    let summary = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert!(summary.failed.is_empty(), "{:?}", summary.failed);
    (summary.report, started.elapsed().as_secs_f64())
}

/// Blend accuracy on held-out fixture pairs, and the two single-modality
/// accuracies on the same pairs.
pub fn blend_fixture_accuracies() -> (f64, f64, f64) {
    let mut rng = rng_for(17, &[]);
    let val = complementary_fixture(&mut rng, 400);
    let test = complementary_fixture(&mut rng, 400);
    let fit = fit_blend(Task::Classification, &val.label, &val.video, &val.targets()).unwrap();
    let blended: Vec<Prediction> =
        test.label.iter().zip(&test.video).map(|(l, v)| blend(&fit.params, l, v).unwrap()).collect();
    (accuracy_of(&blended, &test.truths), accuracy_of(&test.label, &test.truths), accuracy_of(&test.video, &test.truths))
}

pub fn blend_beats_single_modalities() {
    let (b, l, v) = blend_fixture_accuracies();
    assert!(b >= l.max(v), "blend {b} label {l} video {v}");
}

fn actrel(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_actrel")).args(args).output().unwrap();
    assert!(out.status.success(), "actrel {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Trains and scores one label detection model with the CLI, returning the
/// bytes of its metrics.tsv.
fn cli_train_metrics(world: &SynthPaths, dir: &Path) -> Vec<u8> {
    std::fs::create_dir_all(dir).unwrap();
    let config = dir.join("train.txt");
    std::fs::write(&config, KvDocument { root: quick_train_section(), ..Default::default() }.render()).unwrap();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let (run, eval) = (dir.join("run"), dir.join("eval"));
    let (catalog, relations, labels, config) = (p(&world.catalog), p(&world.relations), p(&world.labels), p(&config));
    let (run_s, eval_s) = (p(&run), p(&eval));
    let common = ["--catalog", &catalog, "--relations", &relations, "--task", "detection", "--target", "ds1", "--store", &labels];
    let mut train = vec!["--deterministic", "--seed", "3", "train"];
    train.extend(common);
    train.extend(["--modality", "label", "--config", &config, "--out", &run_s]);
    actrel(&train);
    let mut evaluate = vec!["--deterministic", "evaluate"];
    evaluate.extend(common);
    evaluate.extend(["--run", &run_s, "--out", &eval_s]);
    actrel(&evaluate);
    for f in ["epochs.tsv", "best.aprm"] {
        assert!(run.join(f).exists());
    }
    std::fs::read(eval.join("metrics.tsv")).unwrap()
}

/// Identical seeds give byte-identical metrics.tsv for a single training run
/// and for a full sweep.
pub fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let world = write_world(&small_spec(2), &dir.path().join("world"));

    let (a, b) = (dir.path().join("train-a"), dir.path().join("train-b"));
    let (ma, mb) = (cli_train_metrics(&world, &a), cli_train_metrics(&world, &b));
    assert_eq!(ma, mb);
    for f in ["epochs.tsv", "best.aprm", "config.txt"] {
        assert_eq!(std::fs::read(a.join("run").join(f)).unwrap(), std::fs::read(b.join("run").join(f)).unwrap(), "{f}");
    }

    let mut sweeps = Vec::new();
    for name in ["sweep-a", "sweep-b"] {
        let plan = plan_for(&world, &dir.path().join(name), quick_train_section());
        let summary = run_experiment(&plan, &RunOptions::default()).unwrap();
        assert!(summary.failed.is_empty(), "{:?}", summary.failed);
        sweeps.push(std::fs::read(&summary.paths.metrics).unwrap());
    }
    assert_eq!(sweeps[0], sweeps[1]);
}
