use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use action_relations::blend::fit_blend;
use action_relations::data::{
    build_classification_split, build_detection_split, ingest_relations, write_split_file, DataError, Orientation,
    RelationStore, RelationType, Task, TaskSplit, DEFAULT_VAL_FRACTION,
};
use action_relations::embedding::{EmbeddingError, EmbeddingStore, Modality};
use action_relations::eval::{
    accuracy, classification_rows, detection_rows, evaluate_detection, tune_threshold, Approach, Report, ThresholdRule,
};
use action_relations::harness::{
    predict, read_pairs, run_experiment, write_blend_meta, write_scored, ExperimentPlan, HarnessError, PredictModels,
    RunOptions,
};
use action_relations::kernel::Checkpoint;
use action_relations::kv::{KvDocument, KvError};
use action_relations::model::{read_meta, Prediction, RelationModel};
use action_relations::synth::{generate, SynthSpec};
use action_relations::training::{
    grid_for, hyperparameter_search, predict_pairs, train, validation_set, write_grid, write_run_dir, Inputs, Target,
    TrainConfig, TrainError,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "actrel", version, about = "Relation detection and classification between action classes")]
struct Cli {
    /// Seed overriding the one in configs, specs and plans.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Zero wall-clock fields so every output is byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads for grid points and targets (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    relations: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Embedding store of the training modality.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long)]
    modality: Modality,
    /// Held-out dataset.
    #[arg(long)]
    target: String,
    /// `key = value` TrainConfig overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    val_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a catalog and relations file and print their summary.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Re-emit the relations in canonical orientation.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic multi-dataset world.
    Synth {
        /// `key = value` spec; defaults to the desk spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model with a fixed configuration.
    Train(RunArgs),
    /// Grid-search pooling and depth, keeping the best validation loss.
    Search(RunArgs),
    /// Fit a logistic blend of a label run and a video run on validation pairs.
    Blend {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        label_store: PathBuf,
        #[arg(long)]
        video_store: PathBuf,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        target: String,
        /// Run directory of the label model.
        #[arg(long)]
        label_run: PathBuf,
        /// Run directory of the video model.
        #[arg(long)]
        video_run: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
        val_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one run on the target's test pairs.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        target: String,
        /// Run directory; its `config.txt` supplies the modality and seed.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// `0.5`, `fixed-0.3` or `val-tuned`.
        #[arg(long, default_value = "fixed-0.5")]
        threshold: ThresholdRule,
        #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
        val_fraction: f64,
        /// Directory for `metrics.tsv` and `table.txt`; printed only if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full leave-one-dataset-out sweep of a plan file.
    RunExperiment {
        #[arg(long)]
        plan: PathBuf,
        /// Recompute cells even when finished results match.
        #[arg(long)]
        force: bool,
    },
    /// Score action pairs with trained detection (and classification) runs.
    Predict {
        #[arg(long)]
        det_run: PathBuf,
        #[arg(long)]
        cls_run: Option<PathBuf>,
        /// Embedding stores; each model uses the one matching its modality.
        #[arg(long, required = true)]
        store: Vec<PathBuf>,
        /// `src<TAB>dst` action keys, one pair per line.
        #[arg(long)]
        pairs: PathBuf,
        /// Clips per action for video models.
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Validation errors are input problems the user can fix; they exit with 2.
fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_validation)
            || e.is::<DataError>()
            || e.is::<EmbeddingError>()
            || e.is::<KvError>()
            || e.is::<action_relations::synth::SynthError>()
            || matches!(e.downcast_ref::<TrainError>(), Some(TrainError::InvalidArgument(_) | TrainError::Kv(_)))
    })
}

/// The error and its causes, skipping causes a message already quotes.
fn message(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out = format!("{out}: {c}");
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(if is_validation(&e) { EXIT_VALIDATION } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let globals = Globals { seed: cli.seed, deterministic: cli.deterministic };
    match cli.command {
        Command::Ingest { data, out } => ingest(&data, out.as_deref()),
        Command::Synth { spec, out } => synth(&globals, spec.as_deref(), &out),
        Command::Train(args) => train_run(&globals, &args, false),
        Command::Search(args) => train_run(&globals, &args, true),
        Command::Blend { data, label_store, video_store, task, target, label_run, video_run, val_fraction, out } => {
            blend_run(&globals, &data, [&label_store, &video_store], task, &target, [&label_run, &video_run], val_fraction, &out)
        }
        Command::Evaluate { data, task, target, run, store, threshold, val_fraction, out } => {
            evaluate(&globals, &data, task, &target, &run, &store, threshold, val_fraction, out.as_deref())
        }
        Command::RunExperiment { plan, force } => experiment(&globals, &plan, force),
        Command::Predict { det_run, cls_run, store, pairs, k, out } => {
            predict_run(&globals, &det_run, cls_run.as_deref(), &store, &pairs, k, &out)
        }
    }
}

struct Globals {
    seed: Option<u64>,
    deterministic: bool,
}

fn ingest(data: &DataArgs, out: Option<&Path>) -> Result<ExitCode> {
    let store = ingest_relations(&data.catalog, &data.relations)?;
    let s = store.summary();
    for (d, n) in store.catalog().datasets() {
        println!("dataset\t{d}\t{n}");
    }
    println!("equal\t{}\nsimilar\t{}\nis-a\t{}\nlabeled\t{}\nunrelated\t{}", s.equal, s.similar, s.is_a, s.labeled, s.unrelated);
    if let Some(path) = out {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        store.write_relations_csv(std::io::BufWriter::new(f), Orientation::Canonical)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn synth(g: &Globals, spec: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let mut spec = match spec {
        Some(p) => SynthSpec::from_section(&KvDocument::read(p)?.root)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    let world = generate(&spec)?;
    let paths = world.write(out)?;
    let s = world.store.summary();
    log::info!("wrote {} actions, {} relations to {}", world.catalog().len(), s.labeled, out.display());
    println!("{}", paths.catalog.display());
    Ok(ExitCode::SUCCESS)
}

fn load_config(g: &Globals, task: Task, modality: Modality, path: Option<&Path>) -> Result<TrainConfig> {
    let mut c = TrainConfig::new(task, modality);
    if let Some(p) = path {
        c = c.apply_section(&KvDocument::read(p)?.root)?;
        if c.task != task || c.modality != modality {
            bail!("{} is a {}/{} config but --task {task} --modality {modality} was given", p.display(), c.task, c.modality);
        }
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    c.deterministic |= g.deterministic;
    c.validate()?;
    Ok(c)
}

fn load_store(path: &Path, modality: Modality) -> Result<EmbeddingStore> {
    let store = EmbeddingStore::read(path)?;
    if store.modality() != modality {
        return Err(HarnessError::Validation(format!("{} holds {} embeddings, expected {modality}", path.display(), store.modality())).into());
    }
    Ok(store)
}

fn make_split(store: &RelationStore, task: Task, target: &str, val_fraction: f64, seed: u64) -> Result<TaskSplit> {
    Ok(match task {
        Task::Detection => build_detection_split(store, target, val_fraction, seed)?,
        Task::Classification => build_classification_split(store, target, val_fraction, seed)?,
    })
}

fn train_run(g: &Globals, a: &RunArgs, search: bool) -> Result<ExitCode> {
    let config = load_config(g, a.task, a.modality, a.config.as_deref())?;
    let rel = ingest_relations(&a.data.catalog, &a.data.relations)?;
    let emb = load_store(&a.store, a.modality)?;
    let split = make_split(&rel, a.task, &a.target, a.val_fraction, config.seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let f = std::fs::File::create(a.out.join("split.tsv"))?;
    write_split_file(std::io::BufWriter::new(f), &rel, &split)?;
    let inputs = Inputs::new(rel.catalog(), &emb);
    let (config, outcome) = if search {
        let s = hyperparameter_search(&config, &split, &inputs, &grid_for(a.modality), None)?;
        write_grid(&a.out.join("grid.tsv"), &s.grid)?;
        log::info!("selected grid point {}", s.point);
        (s.config, s.outcome)
    } else {
        let o = train(&config, &split, &inputs, None)?;
        (config, o)
    };
    write_run_dir(&a.out, &config, &outcome)?;
    println!("best_epoch\t{}\nbest_val_loss\t{:.6}", outcome.best_epoch, outcome.best_val_loss);
    Ok(ExitCode::SUCCESS)
}

/// Model and config of a run directory written by `train` or `search`.
fn load_run(dir: &Path) -> Result<(TrainConfig, RelationModel<f32>)> {
    let config = TrainConfig::from_section(&KvDocument::read(&dir.join("config.txt"))?.root)?;
    let meta = read_meta(&dir.join("best.meta"))?;
    let model = RelationModel::from_checkpoint(meta, &Checkpoint::read(&dir.join("best.aprm"))?)?;
    Ok((config, model))
}

fn run_predictions(
    config: &TrainConfig,
    model: &RelationModel<f32>,
    inputs: &Inputs,
    split: &TaskSplit,
) -> Result<(Vec<Target>, Vec<Prediction>, Vec<Prediction>)> {
    let val = validation_set(config, split)?;
    let pairs: Vec<_> = val.iter().map(|e| (e.src, e.dst)).collect();
    let val_preds = predict_pairs(model, inputs, &pairs, config.k_trainval, config.seed, "val-clips")?;
    let test_preds = predict_pairs(model, inputs, &split.test, config.k_test, config.seed, "test-clips")?;
    Ok((val.iter().map(|e| e.target).collect(), val_preds, test_preds))
}

#[allow(clippy::too_many_arguments)]
fn blend_run(
    g: &Globals,
    data: &DataArgs,
    stores: [&PathBuf; 2],
    task: Task,
    target: &str,
    runs: [&PathBuf; 2],
    val_fraction: f64,
    out: &Path,
) -> Result<ExitCode> {
    let rel = ingest_relations(&data.catalog, &data.relations)?;
    let mut preds = Vec::new();
    let mut split_seed = None;
    for (modality, (store, run)) in [Modality::Label, Modality::Video].into_iter().zip(stores.into_iter().zip(runs)) {
        let (config, model) = load_run(run)?;
        if config.task != task || config.modality != modality {
            bail!("{} is a {}/{} run, expected {task}/{modality}", run.display(), config.task, config.modality);
        }
        let seed = g.seed.unwrap_or(config.seed);
        if split_seed.is_some_and(|s| s != seed) {
            bail!("label and video runs were trained with different seeds");
        }
        split_seed = Some(seed);
        let emb = load_store(store, modality)?;
        let split = make_split(&rel, task, target, val_fraction, seed)?;
        preds.push(run_predictions(&config, &model, &Inputs::new(rel.catalog(), &emb), &split)?);
    }
    let (video, label) = (preds.pop().unwrap(), preds.pop().unwrap());
    let fit = fit_blend(task, &label.1, &video.1, &label.0)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fit.params.to_checkpoint().write(&out.join("blend.aprm"))?;
    write_blend_meta(&out.join("blend.meta"), &fit.params, fit.val_loss)?;
    println!("val_loss\t{:.6}", fit.val_loss);
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    g: &Globals,
    data: &DataArgs,
    task: Task,
    target: &str,
    run: &Path,
    store: &Path,
    rule: ThresholdRule,
    val_fraction: f64,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let rel = ingest_relations(&data.catalog, &data.relations)?;
    let (config, model) = load_run(run)?;
    if config.task != task {
        bail!("{} is a {} run, expected {task}", run.display(), config.task);
    }
    let emb = load_store(store, config.modality)?;
    let split = make_split(&rel, task, target, val_fraction, g.seed.unwrap_or(config.seed))?;
    let (val_targets, val, test) = run_predictions(&config, &model, &Inputs::new(rel.catalog(), &emb), &split)?;
    let approach = match config.modality {
        Modality::Label => Approach::LabelOnly,
        Modality::Video => Approach::VideoOnly,
    };
    let mut report = Report::default();
    match task {
        Task::Detection => {
            let det = |p: &[Prediction]| -> Vec<f64> { p.iter().filter_map(Prediction::det).collect() };
            let threshold = match rule {
                ThresholdRule::Fixed(t) => t,
                ThresholdRule::ValTuned => {
                    let flags: Vec<bool> = val_targets.iter().map(|t| *t == Target::Det(true)).collect();
                    tune_threshold(&det(&val), &flags)?
                }
            };
            let truths: Vec<bool> = split.test.iter().map(|&(a, b)| rel.is_related(a, b)).collect();
            report.metrics.extend(detection_rows(target, approach, &evaluate_detection(&det(&test), &truths, threshold, rule)?));
        }
        Task::Classification => {
            let probs: Vec<[f64; 4]> = test.iter().filter_map(Prediction::cls).collect();
            let truths: Vec<RelationType> = split.test.iter().map(|&(a, b)| rel.relation(a, b).expect("annotated test pair")).collect();
            report.metrics.extend(classification_rows(target, approach, &accuracy(&probs, &truths)?));
        }
    }
    match out {
        Some(dir) => {
            report.write(dir)?;
        }
        None => print!("{}", report.metrics_tsv()),
    }
    Ok(ExitCode::SUCCESS)
}

fn experiment(g: &Globals, path: &Path, force: bool) -> Result<ExitCode> {
    let mut plan = ExperimentPlan::read(path)?;
    if let Some(s) = g.seed {
        plan.seed = s;
    }
    plan.deterministic |= g.deterministic;
    let summary = run_experiment(&plan, &RunOptions { force })?;
    print!("{}", summary.report.render_table());
    log::info!(
        "{} cells computed, {} reused, {} skipped, {} failed in {:.1}s",
        summary.computed.len(),
        summary.reused.len(),
        summary.skipped.len(),
        summary.failed.len(),
        summary.seconds
    );
    for f in &summary.failed {
        log::error!("failed: {f}");
    }
    Ok(if summary.partial_failure() { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn predict_run(g: &Globals, det: &Path, cls: Option<&Path>, stores: &[PathBuf], pairs: &Path, k: usize, out: &Path) -> Result<ExitCode> {
    let models = PredictModels::load(det, cls)?;
    let stores: Vec<EmbeddingStore> = stores.iter().map(|p| EmbeddingStore::read(p)).collect::<Result<_, _>>()?;
    let refs: Vec<&EmbeddingStore> = stores.iter().collect();
    let rows = predict(&models, &refs, &read_pairs(pairs)?, k, g.seed.unwrap_or(0))?;
    write_scored(out, &rows, models.cls.is_some())?;
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    if errors > 0 {
        log::warn!("{errors} of {} pairs could not be scored", rows.len());
    }
    Ok(ExitCode::SUCCESS)
}
