use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::plan::ExperimentPlan;
use super::HarnessError;
use crate::blend::{blend, fit_blend, BlendParams};
use crate::data::{
    build_classification_split, build_detection_split, class_prior, write_split_file, Catalog, RelationStore,
    RelationType, Task, TaskSplit,
};
use crate::embedding::{EmbeddingStore, Modality};
use crate::eval::{
    accuracy, classification_rows, detection_prior, detection_rows, evaluate_detection, missing_rows, prior_of,
    random_classification, random_classification_rows, random_detection, random_detection_rows, tune_threshold,
    Approach, ConfusionRow, PriorRow, Report, ReportPaths, ThresholdRule,
};
use crate::kv::KvDocument;
use crate::model::Prediction;
use crate::rng::{derive_seed, tag};
use crate::training::{
    complement_size, grid_for, hyperparameter_search, predict_pairs, validation_set, write_grid, write_run_dir, Inputs,
    SearchOutcome, Target, TrainConfig,
};

const CELL_FORMAT: &str = "actrel-cell-v1";
const TEST_STREAM: &str = "test-clips";
const VAL_STREAM: &str = "val-clips";

/// Relation store, embeddings and input digests of a validated plan.
pub struct World {
    pub store: RelationStore,
    pub labels: EmbeddingStore,
    pub videos: Option<EmbeddingStore>,
    pub targets: Vec<String>,
    /// Datasets with at least one action lacking video clips, with the count.
    pub video_gaps: BTreeMap<String, usize>,
    digest: String,
}

fn file_digest(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Keeps only the actions of `datasets` and the relations among them.
fn restrict(store: &RelationStore, datasets: &[String]) -> Result<RelationStore, HarnessError> {
    let old = store.catalog();
    let actions = old.actions().iter().filter(|a| datasets.contains(&a.key.dataset)).cloned().collect();
    let catalog = Catalog::from_actions(actions)?;
    let mut out = RelationStore::empty(catalog.clone());
    for (a, b, r) in store.iter() {
        if let (Some(x), Some(y)) = (catalog.lookup(old.key(a)), catalog.lookup(old.key(b))) {
            out.insert(x, y, r)?;
        }
    }
    Ok(out)
}

impl World {
    /// Loads every input and checks coverage up front. Missing label vectors
    /// are a validation error; missing video clips only disable video cells.
    pub fn load(plan: &ExperimentPlan) -> Result<World, HarnessError> {
        let mut store = crate::data::ingest_relations(&plan.catalog, &plan.relations)?;
        let present: Vec<String> = store.catalog().datasets().into_keys().collect();
        if !plan.datasets.is_empty() {
            if let Some(d) = plan.datasets.iter().find(|d| !present.contains(d)) {
                return Err(HarnessError::Validation(format!("dataset `{d}` has no catalog entries")));
            }
            store = restrict(&store, &plan.datasets)?;
        }
        let datasets: Vec<String> = store.catalog().datasets().into_keys().collect();
        if datasets.len() < 2 {
            return Err(HarnessError::Validation("a leave-one-dataset-out sweep needs at least two datasets".into()));
        }
        let targets = if plan.targets.is_empty() { datasets.clone() } else { plan.targets.clone() };
        if let Some(t) = targets.iter().find(|t| !datasets.contains(t)) {
            return Err(HarnessError::Validation(format!("target `{t}` is not a participating dataset")));
        }

        let labels = EmbeddingStore::read(&plan.label_store)?;
        if labels.modality() != Modality::Label {
            return Err(HarnessError::Validation(format!("{} holds {} embeddings", plan.label_store.display(), labels.modality())));
        }
        let missing: Vec<String> =
            store.catalog().actions().iter().filter(|a| !labels.contains(&a.key)).map(|a| a.key.to_string()).collect();
        if !missing.is_empty() {
            return Err(HarnessError::Validation(format!(
                "{} actions lack label embeddings (first: {})",
                missing.len(),
                missing[0]
            )));
        }

        let mut digest = format!("catalog={}\nrelations={}\nlabel={}\n", file_digest(&plan.catalog)?, file_digest(&plan.relations)?, file_digest(&plan.label_store)?);
        let mut video_gaps = BTreeMap::new();
        let videos = match &plan.video_store {
            Some(p) => {
                let v = EmbeddingStore::read(p)?;
                if v.modality() != Modality::Video {
                    return Err(HarnessError::Validation(format!("{} holds {} embeddings", p.display(), v.modality())));
                }
                writeln!(digest, "video={}", file_digest(p)?).unwrap();
                for a in store.catalog().actions() {
                    if !v.contains(&a.key) {
                        *video_gaps.entry(a.key.dataset.clone()).or_insert(0) += 1;
                    }
                }
                Some(v)
            }
            None => {
                digest.push_str("video=none\n");
                None
            }
        };
        for (d, n) in &video_gaps {
            log::warn!("{n} actions of {d} have no video clips; video cells touching {d} are skipped");
        }
        Ok(World { store, labels, videos, targets, video_gaps, digest })
    }

    /// `None` when video cells can run for `target`, otherwise the reason.
    /// Video training uses every source dataset, so a gap in any
    /// participating dataset disables the target's video-only and blend.
    pub fn video_skip_reason(&self) -> Option<String> {
        if self.videos.is_none() {
            return Some("skipped: plan has no video store".into());
        }
        if self.video_gaps.is_empty() {
            return None;
        }
        let gaps: Vec<String> = self.video_gaps.iter().map(|(d, n)| format!("{d} ({n} actions)")).collect();
        Some(format!("skipped: no video coverage for {}", gaps.join(", ")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Recompute cells even when a matching finished cell exists.
    pub force: bool,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub report: Report,
    pub paths: ReportPaths,
    /// `target/task` units, in plan order.
    pub computed: Vec<String>,
    pub reused: Vec<String>,
    /// `target/task/approach: reason`.
    pub failed: Vec<String>,
    pub skipped: Vec<String>,
    pub seconds: f64,
}

impl ExperimentSummary {
    pub fn partial_failure(&self) -> bool {
        !self.failed.is_empty()
    }
}

/// Exclusive ownership of a run directory, released on drop.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(HarnessError::Lock(format!(
                "{} exists; another run owns this directory (delete it if that run is gone)",
                path.display()
            ))),
            Err(e) => Err(HarnessError::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

struct ModalityRun {
    search: SearchOutcome,
    val: Vec<Prediction>,
    test: Vec<Prediction>,
}

fn modality_run(
    base: &TrainConfig,
    split: &TaskSplit,
    inputs: &Inputs,
    val_examples: &[crate::training::Example],
    dir: &Path,
) -> Result<ModalityRun, HarnessError> {
    let search = hyperparameter_search(base, split, inputs, &grid_for(base.modality), None)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_grid(&dir.join("grid.tsv"), &search.grid)?;
    write_run_dir(dir, &search.config, &search.outcome)?;
    let model = &search.outcome.model;
    let pairs: Vec<_> = val_examples.iter().map(|e| (e.src, e.dst)).collect();
    let val = predict_pairs(model, inputs, &pairs, search.config.k_trainval, search.config.seed, VAL_STREAM)?;
    let test = predict_pairs(model, inputs, &split.test, search.config.k_test, search.config.seed, TEST_STREAM)?;
    Ok(ModalityRun { search, val, test })
}

fn det_scores(p: &[Prediction]) -> Vec<f64> {
    p.iter().map(|x| x.det().unwrap_or(f64::NAN)).collect()
}

fn cls_probs(p: &[Prediction]) -> Vec<[f64; 4]> {
    p.iter().map(|x| x.cls().unwrap_or([f64::NAN; 4])).collect()
}

struct Truths {
    val: Vec<Target>,
    det: Vec<bool>,
    cls: Vec<RelationType>,
}

fn evaluate(
    target: &str,
    task: Task,
    approach: Approach,
    rule: ThresholdRule,
    val: &[Prediction],
    test: &[Prediction],
    truths: &Truths,
    report: &mut Report,
) -> Result<(), HarnessError> {
    match task {
        Task::Detection => {
            let threshold = match rule {
                ThresholdRule::Fixed(t) => t,
                ThresholdRule::ValTuned => {
                    let flags: Vec<bool> = truths.val.iter().map(|t| matches!(t, Target::Det(true))).collect();
                    tune_threshold(&det_scores(val), &flags)?
                }
            };
            let r = evaluate_detection(&det_scores(test), &truths.det, threshold, rule)?;
            report.metrics.extend(detection_rows(target, approach, &r));
        }
        Task::Classification => {
            let r = accuracy(&cls_probs(test), &truths.cls)?;
            report.metrics.extend(classification_rows(target, approach, &r));
            report.confusions.push(ConfusionRow { target: target.into(), approach, confusion: r.confusion });
        }
    }
    Ok(())
}

/// Hash of everything a cell's numbers depend on.
fn cell_key(plan: &ExperimentPlan, world: &World, target: &str, task: Task, configs: &[&TrainConfig], video: &Option<String>) -> String {
    let mut s = format!("{CELL_FORMAT}\n{}", world.digest);
    let datasets: Vec<String> = world.store.catalog().datasets().into_keys().collect();
    writeln!(s, "datasets={}\ntarget={target}\ntask={task}", datasets.join(",")).unwrap();
    writeln!(s, "seed={}\nval_fraction={}\nthreshold={}\nrandom_trials={}", plan.seed, plan.val_fraction, plan.threshold, plan.random_trials)
        .unwrap();
    writeln!(s, "video={}", video.as_deref().unwrap_or("on")).unwrap();
    for c in configs {
        s.push_str(&KvDocument { root: c.to_section(), ..Default::default() }.render());
    }
    hex::encode(Sha256::digest(s.as_bytes()))
}

fn write_predictions(path: &Path, store: &RelationStore, split: &TaskSplit, cols: &[(Approach, &[Prediction])]) -> Result<(), HarnessError> {
    let mut s = String::from("src\tdst\ttruth");
    for (a, _) in cols {
        write!(s, "\t{a}").unwrap();
    }
    s.push('\n');
    let cat = store.catalog();
    for (i, &(a, b)) in split.test.iter().enumerate() {
        let truth = store.relation(a, b).map_or("unrelated", RelationType::name);
        write!(s, "{}\t{}\t{truth}", cat.key(a), cat.key(b)).unwrap();
        for (_, p) in cols {
            match p[i] {
                Prediction::Det(v) => write!(s, "\t{v:.6}").unwrap(),
                Prediction::Cls(v) => {
                    let probs: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
                    write!(s, "\t{}", probs.join(",")).unwrap();
                }
            }
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}

struct UnitResult {
    report: Report,
    reused: bool,
    failed: Vec<String>,
    skipped: Vec<String>,
}

fn run_unit(plan: &ExperimentPlan, world: &World, target: &str, task: Task, opts: &RunOptions) -> Result<UnitResult, HarnessError> {
    let dir = plan.output.join("targets").join(target).join(task.name());
    let label_cfg = plan.train_config(target, task, Modality::Label)?;
    let video_cfg = plan.train_config(target, task, Modality::Video)?;
    let video_skip = world.video_skip_reason();
    let key = cell_key(plan, world, target, task, &[&label_cfg, &video_cfg], &video_skip);
    let key_path = dir.join("cell.key");

    if !opts.force && std::fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key) {
        if let Ok(report) = Report::read(&dir) {
            log::info!("{target}/{task}: reusing finished cell");
            let skipped = skipped_of(&report);
            return Ok(UnitResult { report, reused: true, failed: Vec::new(), skipped });
        }
    }
    let _ = std::fs::remove_file(&key_path);
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let started = Instant::now();
    let mut report = Report::default();
    let mut failed = Vec::new();
    let mut skipped = Vec::new();

    let split = match task {
        Task::Detection => build_detection_split(&world.store, target, plan.val_fraction, plan.seed),
        Task::Classification => build_classification_split(&world.store, target, plan.val_fraction, plan.seed),
    };
    let split = match split {
        Ok(s) => s,
        Err(e) => {
            let note = format!("failed: {e}");
            for a in Approach::ALL {
                report.metrics.extend(missing_rows(target, task, a, &note));
                failed.push(format!("{target}/{task}/{a}: {e}"));
            }
            return Ok(UnitResult { report, reused: false, failed, skipped });
        }
    };
    let f = File::create(dir.join("split.tsv")).map_err(|e| HarnessError::io(&dir.join("split.tsv"), e))?;
    write_split_file(BufWriter::new(f), &world.store, &split).map_err(|e| HarnessError::io(&dir.join("split.tsv"), e))?;
    for w in &split.warnings {
        log::warn!("{target}/{task}: {w:?}");
    }

    let val_examples = validation_set(&label_cfg, &split)?;
    let truths = Truths {
        val: val_examples.iter().map(|e| e.target).collect(),
        det: split.test.iter().map(|&(a, b)| world.store.is_related(a, b)).collect(),
        cls: split.test.iter().map(|&(a, b)| world.store.relation(a, b).unwrap_or(RelationType::Equal)).collect(),
    };

    let label_inputs = Inputs::new(world.store.catalog(), &world.labels);
    let label = modality_run(&label_cfg, &split, &label_inputs, &val_examples, &dir.join("label"));
    let video = match (&video_skip, &world.videos) {
        (None, Some(v)) => {
            let inputs = Inputs::new(world.store.catalog(), v);
            if validation_set(&video_cfg, &split)? != val_examples {
                return Err(HarnessError::Plan(format!("{target}: label and video validation sets differ; keep neg_multiplier shared")));
            }
            Some(modality_run(&video_cfg, &split, &inputs, &val_examples, &dir.join("video")))
        }
        _ => None,
    };

    let mut record = |approach: Approach, outcome: Result<(&[Prediction], &[Prediction]), String>, report: &mut Report| {
        let result = outcome.and_then(|(val, test)| {
            evaluate(target, task, approach, plan.threshold, val, test, &truths, report).map_err(|e| e.to_string())
        });
        if let Err(e) = result {
            report.metrics.extend(missing_rows(target, task, approach, &format!("failed: {e}")));
            failed.push(format!("{target}/{task}/{approach}: {e}"));
        }
    };

    let label_ok = label.as_ref().map_err(|e| e.to_string());
    record(Approach::LabelOnly, label_ok.as_ref().map(|r| (&r.val[..], &r.test[..])).map_err(Clone::clone), &mut report);
    let mut blended: Option<(Vec<Prediction>, Vec<Prediction>)> = None;
    match (&video, &video_skip) {
        (None, reason) => {
            let note = reason.clone().unwrap_or_else(|| "skipped".into());
            for a in [Approach::VideoOnly, Approach::Blending] {
                report.metrics.extend(missing_rows(target, task, a, &note));
                skipped.push(format!("{target}/{task}/{a}"));
            }
        }
        (Some(v), _) => {
            let video_ok = v.as_ref().map_err(|e| e.to_string());
            record(Approach::VideoOnly, video_ok.as_ref().map(|r| (&r.val[..], &r.test[..])).map_err(Clone::clone), &mut report);
            let fitted = match (&label_ok, &video_ok) {
                (Ok(l), Ok(v)) => fit_and_apply(task, l, v, &truths.val, &dir.join("blend")),
                _ => Err("needs both label-only and video-only models".to_string()),
            };
            match fitted {
                Ok(p) => {
                    record(Approach::Blending, Ok((&p.0[..], &p.1[..])), &mut report);
                    blended = Some(p);
                }
                Err(e) => record(Approach::Blending, Err(e), &mut report),
            }
        }
    }

    let random_seed = derive_seed(plan.seed, &[tag("random"), tag(target), tag(task.name())]);
    let random = match task {
        Task::Detection => {
            let n_pos = split.train.len();
            let n_neg = (label_cfg.neg_multiplier * n_pos).min(complement_size(&split));
            detection_prior(n_pos, n_neg)
                .and_then(|q| random_detection(q, &truths.det, random_seed, plan.random_trials))
                .map(|r| report.metrics.extend(random_detection_rows(target, &r)))
        }
        Task::Classification => class_prior(&split.train)
            .map_err(|e| crate::eval::EvalError::InvalidArgument(e.to_string()))
            .and_then(|p| {
                let r = random_classification(&p, &truths.cls, random_seed, plan.random_trials)?;
                report.priors.push(PriorRow { target: target.into(), split: "train".into(), prior: p });
                report.priors.push(PriorRow { target: target.into(), split: "test".into(), prior: prior_of(&truths.cls)? });
                report.metrics.extend(random_classification_rows(target, &r));
                Ok(())
            }),
    };
    if let Err(e) = random {
        report.metrics.extend(missing_rows(target, task, Approach::Random, &format!("failed: {e}")));
        failed.push(format!("{target}/{task}/random: {e}"));
    }

    let mut cols: Vec<(Approach, &[Prediction])> = Vec::new();
    if let Ok(l) = &label {
        cols.push((Approach::LabelOnly, &l.test));
    }
    if let Some(Ok(v)) = &video {
        cols.push((Approach::VideoOnly, &v.test));
    }
    if let Some((_, t)) = &blended {
        cols.push((Approach::Blending, t));
    }
    write_predictions(&dir.join("predictions.tsv"), &world.store, &split, &cols)?;

    report.write(&dir)?;
    let report = Report::read(&dir)?;
    if failed.is_empty() {
        std::fs::write(&key_path, format!("{key}\n")).map_err(|e| HarnessError::io(&key_path, e))?;
    }
    log::info!("{target}/{task}: finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(UnitResult { report, reused: false, failed, skipped })
}

fn skipped_of(report: &Report) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in &report.metrics {
        let id = format!("{}/{}/{}", r.target, r.task, r.approach);
        if r.value.is_none() && r.note.starts_with("skipped") && !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

fn fit_and_apply(
    task: Task,
    label: &ModalityRun,
    video: &ModalityRun,
    val_targets: &[Target],
    dir: &Path,
) -> Result<(Vec<Prediction>, Vec<Prediction>), String> {
    let run = || -> Result<(Vec<Prediction>, Vec<Prediction>), HarnessError> {
        let fit = fit_blend(task, &label.val, &video.val, val_targets)?;
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        fit.params.to_checkpoint().write(&dir.join("blend.aprm"))?;
        write_blend_meta(&dir.join("blend.meta"), &fit.params, fit.val_loss)?;
        let apply = |l: &[Prediction], v: &[Prediction]| -> Result<Vec<Prediction>, HarnessError> {
            l.iter().zip(v).map(|(a, b)| Ok(blend(&fit.params, a, b)?)).collect()
        };
        let _ = (&label.search, &video.search);
        Ok((apply(&label.val, &video.val)?, apply(&label.test, &video.test)?))
    };
    run().map_err(|e| e.to_string())
}

pub fn write_blend_meta(path: &Path, params: &BlendParams, val_loss: f64) -> Result<(), HarnessError> {
    let mut doc = KvDocument::default();
    doc.root.set("task", params.task());
    doc.root.set("inputs", "label,video");
    doc.root.set("fit", "per-target");
    doc.root.set("val_loss", format!("{val_loss:.6}"));
    std::fs::write(path, doc.render()).map_err(|e| HarnessError::io(path, e))
}

/// Runs every `target × task` unit of the plan, reusing finished units whose
/// inputs and configs are unchanged, and writes the combined report under
/// the plan's output directory.
pub fn run_experiment(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentSummary, HarnessError> {
    let started = Instant::now();
    let world = World::load(plan)?;
    let _lock = RunLock::acquire(&plan.output)?;
    let plan_path = plan.output.join("plan.txt");
    std::fs::write(&plan_path, plan.to_document().render()).map_err(|e| HarnessError::io(&plan_path, e))?;

    let units: Vec<(String, Task)> = world
        .targets
        .iter()
        .flat_map(|t| [Task::Detection, Task::Classification].map(|task| (t.clone(), task)))
        .collect();
    let results: Vec<Result<UnitResult, HarnessError>> =
        units.par_iter().map(|(t, task)| run_unit(plan, &world, t, *task, opts)).collect();

    let mut summary_parts = (Report::default(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ((t, task), r) in units.iter().zip(results) {
        let id = format!("{t}/{task}");
        match r {
            Ok(u) => {
                if u.reused {
                    summary_parts.2.push(id);
                } else {
                    summary_parts.1.push(id);
                }
                summary_parts.0.extend(u.report);
                summary_parts.3.extend(u.failed);
                summary_parts.4.extend(u.skipped);
            }
            Err(e) => {
                log::error!("{id}: {e}");
                for a in Approach::ALL {
                    summary_parts.0.metrics.extend(missing_rows(t, *task, a, &format!("failed: {e}")));
                    summary_parts.3.push(format!("{id}/{a}: {e}"));
                }
            }
        }
    }
    let (report, computed, reused, failed, skipped) = summary_parts;
    let paths = report.write(&plan.output)?;
    Ok(ExperimentSummary { report, paths, computed, reused, failed, skipped, seconds: started.elapsed().as_secs_f64() })
}
