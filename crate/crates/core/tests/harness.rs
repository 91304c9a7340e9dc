mod common;

use std::path::Path;
use std::process::{Command, Stdio};

use action_relations::embedding::EmbeddingStore;
use action_relations::eval::Approach;
use action_relations::harness::{run_experiment, ExperimentPlan, RunLock, RunOptions};
use action_relations::synth::SynthPaths;
use action_relations::Task;
use common::e2e::write_world;
use common::{plan_for, quick_train_section, small_spec};

fn small_plan(dir: &Path) -> (SynthPaths, ExperimentPlan) {
    let world = write_world(&small_spec(8), &dir.join("world"));
    let plan = plan_for(&world, &dir.join("out"), quick_train_section());
    (world, plan)
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    common::e2e::reruns_are_byte_identical();
}

#[test]
fn finished_cells_are_reused_and_missing_ones_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plan) = small_plan(dir.path());
    let first = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert_eq!(first.computed.len(), 6);
    assert!(first.reused.is_empty() && first.failed.is_empty() && first.skipped.is_empty());
    let metrics = read(&first.paths.metrics);

    let again = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert_eq!((again.computed.len(), again.reused.len()), (0, 6));
    assert_eq!(read(&again.paths.metrics), metrics);

    let cell = plan.output.join("targets").join("ds1").join("cls");
    std::fs::remove_file(cell.join("cell.key")).unwrap();
    let resumed = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert_eq!(resumed.computed, vec!["ds1/cls".to_string()]);
    assert_eq!(resumed.reused.len(), 5);
    assert_eq!(read(&resumed.paths.metrics), metrics);

    let forced = run_experiment(&plan, &RunOptions { force: true }).unwrap();
    assert_eq!(forced.computed.len(), 6);
    assert_eq!(read(&forced.paths.metrics), metrics);
}

#[test]
fn changed_training_overrides_invalidate_cells() {
    let dir = tempfile::tempdir().unwrap();
    let (_, mut plan) = small_plan(dir.path());
    plan.targets = vec!["ds0".into()];
    run_experiment(&plan, &RunOptions::default()).unwrap();
    plan.train.set("epochs", 3);
    let changed = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert_eq!(changed.computed.len(), 2);
    assert!(changed.reused.is_empty());
}

/// Rewrites the video store without the first action of `ds2`.
fn drop_one_video(world: &SynthPaths) {
    let full = EmbeddingStore::read(&world.videos).unwrap();
    let mut cut = EmbeddingStore::new(full.modality(), full.dim()).unwrap();
    let victim = full.keys().find(|k| k.dataset == "ds2").unwrap().clone();
    for key in full.keys() {
        if *key != victim {
            let r = full.get(key).unwrap();
            cut.insert(key.clone(), (0..r.clip_count()).map(|i| r.clip(i).to_vec()).collect()).unwrap();
        }
    }
    cut.write(&world.videos).unwrap();
}

#[test]
fn video_gap_skips_video_cells_and_keeps_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let (world, plan) = small_plan(dir.path());
    drop_one_video(&world);
    let summary = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert!(summary.failed.is_empty(), "{:?}", summary.failed);
    // 3 targets × 2 tasks × 2 video-dependent approaches.
    assert_eq!(summary.skipped.len(), 12, "{:?}", summary.skipped);

    let report = &summary.report;
    let mut cells = 0;
    for target in ["ds0", "ds1", "ds2"] {
        for task in [Task::Detection, Task::Classification] {
            for approach in Approach::ALL {
                let rows: Vec<_> =
                    report.metrics.iter().filter(|r| r.target == target && r.task == task && r.approach == approach).collect();
                assert!(!rows.is_empty(), "{target} {task} {approach}");
                cells += 1;
                let video = matches!(approach, Approach::VideoOnly | Approach::Blending);
                for r in rows {
                    if video {
                        assert!(r.value.is_none() && r.note.starts_with("skipped: no video coverage for ds2"), "{r:?}");
                    } else {
                        assert!(r.value.is_some(), "{r:?}");
                    }
                }
            }
        }
    }
    assert_eq!(cells, 24);
    let tsv = std::fs::read_to_string(&summary.paths.metrics).unwrap();
    assert!(tsv.lines().any(|l| l.contains("\tvideo-only\t") && l.contains("\tNA\tskipped")));

    let again = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert_eq!(again.reused.len(), 6);
    assert_eq!(again.skipped, summary.skipped);
}

#[test]
fn a_held_lock_refuses_a_second_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plan) = small_plan(dir.path());
    let lock = RunLock::acquire(&plan.output).unwrap();
    let err = run_experiment(&plan, &RunOptions::default()).unwrap_err();
    assert!(err.is_validation(), "{err}");
    drop(lock);
    assert!(!plan.output.join(".lock").exists());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plan) = small_plan(dir.path());
    let plan_path = dir.path().join("plan.txt");
    std::fs::write(&plan_path, plan.to_document().render()).unwrap();
    let run = |p: &Path| Command::new(env!("CARGO_BIN_EXE_actrel")).arg("run-experiment").arg("--plan").arg(p).stderr(Stdio::null()).status().unwrap();

    let _lock = RunLock::acquire(&plan.output).unwrap();
    assert_eq!(run(&plan_path).code(), Some(2));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "seed = 1\nval_fraction = 2\n").unwrap();
    assert_eq!(run(&bad).code(), Some(2));
    assert_eq!(run(&dir.path().join("absent.txt")).code(), Some(2));
}

#[test]
fn blend_fixture_beats_single_modalities() {
    common::e2e::blend_beats_single_modalities();
}
