use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::baseline::{RandomClassification, RandomDetection};
use super::metrics::{ClassificationResult, DetectionResult};
use super::EvalError;
use crate::data::{RelationType, Task};

const COUNT: usize = RelationType::COUNT;

pub const DET_METRICS: [&str; 4] = ["f1", "ap", "precision", "recall"];
pub const CLS_METRICS: [&str; 1] = ["accuracy"];
pub const AP_NOTE: &str = "ap=mean-precision-at-positives";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    LabelOnly,
    VideoOnly,
    Blending,
    Random,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::LabelOnly, Approach::VideoOnly, Approach::Blending, Approach::Random];

    pub fn name(self) -> &'static str {
        match self {
            Approach::LabelOnly => "label-only",
            Approach::VideoOnly => "video-only",
            Approach::Blending => "blending",
            Approach::Random => "random",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Approach::LabelOnly => "Label-only",
            Approach::VideoOnly => "Video-only",
            Approach::Blending => "Blending",
            Approach::Random => "Random",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown approach `{s}`")))
    }
}

/// One line of `metrics.tsv`. A missing value marks a skipped or failed cell
/// and the note says which.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub target: String,
    pub task: Task,
    pub approach: Approach,
    pub metric: String,
    pub value: Option<f64>,
    pub note: String,
}

impl MetricRow {
    pub fn new(target: &str, task: Task, approach: Approach, metric: &str, value: f64, note: impl Into<String>) -> Self {
        MetricRow { target: target.into(), task, approach, metric: metric.into(), value: Some(value), note: note.into() }
    }

    pub fn missing(target: &str, task: Task, approach: Approach, metric: &str, note: impl Into<String>) -> Self {
        MetricRow { target: target.into(), task, approach, metric: metric.into(), value: None, note: note.into() }
    }
}

pub fn detection_rows(target: &str, approach: Approach, r: &DetectionResult) -> Vec<MetricRow> {
    let rule = format!("threshold={} ({})", fmt_value(r.threshold), r.rule);
    vec![
        MetricRow::new(target, Task::Detection, approach, "f1", r.f1, rule.clone()),
        MetricRow::new(target, Task::Detection, approach, "ap", r.ap, AP_NOTE),
        MetricRow::new(target, Task::Detection, approach, "precision", r.precision, rule.clone()),
        MetricRow::new(target, Task::Detection, approach, "recall", r.recall, rule),
    ]
}

pub fn classification_rows(target: &str, approach: Approach, r: &ClassificationResult) -> Vec<MetricRow> {
    vec![MetricRow::new(target, Task::Classification, approach, "accuracy", r.accuracy, "argmax, ties to lowest index")]
}

pub fn random_detection_rows(target: &str, r: &RandomDetection) -> Vec<MetricRow> {
    let note = format!("monte-carlo mean over {} trials, prior={}", r.trials, fmt_value(r.prior));
    let ap_note = format!("{note}, {AP_NOTE}");
    let t = Task::Detection;
    vec![
        MetricRow::new(target, t, Approach::Random, "f1", r.f1, note.clone()),
        MetricRow::new(target, t, Approach::Random, "ap", r.ap, ap_note),
        MetricRow::new(target, t, Approach::Random, "precision", r.precision, note.clone()),
        MetricRow::new(target, t, Approach::Random, "recall", r.recall, note),
    ]
}

pub fn random_classification_rows(target: &str, r: &RandomClassification) -> Vec<MetricRow> {
    let t = Task::Classification;
    vec![
        MetricRow::new(target, t, Approach::Random, "accuracy", r.monte_carlo, format!("monte-carlo mean over {} trials", r.trials)),
        MetricRow::new(target, t, Approach::Random, "accuracy_expected", r.analytic, "analytic sum of train x test prior"),
    ]
}

/// Rows for a cell that produced no numbers.
pub fn missing_rows(target: &str, task: Task, approach: Approach, note: &str) -> Vec<MetricRow> {
    let metrics: &[&str] = match task {
        Task::Detection => &DET_METRICS,
        Task::Classification => &CLS_METRICS,
    };
    metrics.iter().map(|m| MetricRow::missing(target, task, approach, m, note)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionRow {
    pub target: String,
    pub approach: Approach,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; COUNT]; COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorRow {
    pub target: String,
    pub split: String,
    pub prior: [f64; COUNT],
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

fn sanitize(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub metrics: Vec<MetricRow>,
    pub confusions: Vec<ConfusionRow>,
    pub priors: Vec<PriorRow>,
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub metrics: PathBuf,
    pub confusion: PathBuf,
    pub priors: PathBuf,
    pub table: PathBuf,
}

impl Report {
    pub fn extend(&mut self, other: Report) {
        self.metrics.extend(other.metrics);
        self.confusions.extend(other.confusions);
        self.priors.extend(other.priors);
    }

    pub fn value(&self, target: &str, task: Task, approach: Approach, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|r| r.target == target && r.task == task && r.approach == approach && r.metric == metric)
            .and_then(|r| r.value)
    }

    pub fn targets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.metrics {
            if !out.contains(&r.target) {
                out.push(r.target.clone());
            }
        }
        out
    }

    pub fn metrics_tsv(&self) -> String {
        let mut s = String::from("target\ttask\tapproach\tmetric\tvalue\tnote\n");
        for r in &self.metrics {
            let v = r.value.map_or("NA".to_string(), fmt_value);
            writeln!(s, "{}\t{}\t{}\t{}\t{v}\t{}", sanitize(&r.target), r.task, r.approach, r.metric, sanitize(&r.note)).unwrap();
        }
        s
    }

    pub fn confusion_tsv(&self) -> String {
        let mut s = String::from("target\tapproach\ttruth\tpredicted\tcount\n");
        for c in &self.confusions {
            for (t, row) in c.confusion.iter().enumerate() {
                for (p, n) in row.iter().enumerate() {
                    let name = |i: usize| RelationType::ALL[i].name();
                    writeln!(s, "{}\t{}\t{}\t{}\t{n}", sanitize(&c.target), c.approach, name(t), name(p)).unwrap();
                }
            }
        }
        s
    }

    pub fn priors_tsv(&self) -> String {
        let mut s = String::from("target\tsplit");
        for r in RelationType::ALL {
            write!(s, "\t{r}").unwrap();
        }
        s.push('\n');
        for p in &self.priors {
            write!(s, "{}\t{}", sanitize(&p.target), p.split).unwrap();
            for v in p.prior {
                write!(s, "\t{v:.3}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    fn cell(&self, target: &str, task: Task, approach: Approach, metric: &str) -> String {
        let row = self
            .metrics
            .iter()
            .find(|r| r.target == target && r.task == task && r.approach == approach && r.metric == metric);
        match row {
            Some(MetricRow { value: Some(v), .. }) => format!("{:.1}", v * 100.0),
            Some(r) if r.note.starts_with("skipped") => "skip".into(),
            Some(_) => "fail".into(),
            None => "-".into(),
        }
    }

    /// Approach rows against target columns: F1 and AP for detection,
    /// accuracy for classification, in percent.
    pub fn render_table(&self) -> String {
        let targets = self.targets();
        let mut s = String::new();
        let width = 12;
        for (task, metrics) in [(Task::Detection, &["f1", "ap"][..]), (Task::Classification, &["accuracy"][..])] {
            writeln!(s, "{} (%)", if task == Task::Detection { "Detection" } else { "Classification" }).unwrap();
            write!(s, "{:<width$}", "").unwrap();
            for t in &targets {
                let header = if task == Task::Detection { format!("{t} F1/AP") } else { format!("{t} Acc") };
                write!(s, " | {header:>13}").unwrap();
            }
            s.push('\n');
            for a in Approach::ALL {
                write!(s, "{:<width$}", a.title()).unwrap();
                for t in &targets {
                    let cells: Vec<String> = metrics.iter().map(|m| self.cell(t, task, a, m)).collect();
                    write!(s, " | {:>13}", cells.join(" / ")).unwrap();
                }
                s.push('\n');
            }
            s.push('\n');
        }
        if !self.priors.is_empty() {
            s.push_str("Class priors (equal, similar, subclass_of, superclass_of)\n");
            for p in &self.priors {
                let v: Vec<String> = p.prior.iter().map(|x| format!("{x:.3}")).collect();
                writeln!(s, "{:<width$} {:<5} [{}]", p.target, p.split, v.join(", ")).unwrap();
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<ReportPaths, EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let paths = ReportPaths {
            metrics: dir.join("metrics.tsv"),
            confusion: dir.join("confusion.tsv"),
            priors: dir.join("priors.tsv"),
            table: dir.join("table.txt"),
        };
        for (p, body) in [
            (&paths.metrics, self.metrics_tsv()),
            (&paths.confusion, self.confusion_tsv()),
            (&paths.priors, self.priors_tsv()),
            (&paths.table, self.render_table()),
        ] {
            std::fs::write(p, body).map_err(|e| EvalError::io(p, e))?;
        }
        Ok(paths)
    }

    /// Reads back the three TSV files written by [`Report::write`].
    pub fn read(dir: &Path) -> Result<Report, EvalError> {
        let load = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| EvalError::io(&p, e))
        };
        Ok(Report {
            metrics: Self::parse_metrics(&load("metrics.tsv")?)?,
            confusions: Self::parse_confusion(&load("confusion.tsv")?)?,
            priors: Self::parse_priors(&load("priors.tsv")?)?,
        })
    }

    pub fn parse_confusion(text: &str) -> Result<Vec<ConfusionRow>, EvalError> {
        let mut rows: Vec<ConfusionRow> = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |m: &str| EvalError::InvalidArgument(format!("confusion line {}: {m}", n + 1));
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let approach = f[1].parse::<Approach>()?;
            let find = |name: &str| RelationType::ALL.iter().position(|r| r.name() == name).ok_or_else(|| bad("unknown relation"));
            let (t, p) = (find(f[2])?, find(f[3])?);
            let count: usize = f[4].parse().map_err(|_| bad("bad count"))?;
            let same = rows.last().is_some_and(|r| r.target == f[0] && r.approach == approach) && (t, p) != (0, 0);
            if !same {
                rows.push(ConfusionRow { target: f[0].into(), approach, confusion: [[0; COUNT]; COUNT] });
            }
            rows.last_mut().expect("pushed above").confusion[t][p] = count;
        }
        Ok(rows)
    }

    pub fn parse_priors(text: &str) -> Result<Vec<PriorRow>, EvalError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || EvalError::InvalidArgument(format!("priors line {}", n + 1));
            if f.len() != 2 + COUNT {
                return Err(bad());
            }
            let mut prior = [0.0; COUNT];
            for (v, s) in prior.iter_mut().zip(&f[2..]) {
                *v = s.parse().map_err(|_| bad())?;
            }
            rows.push(PriorRow { target: f[0].into(), split: f[1].into(), prior });
        }
        Ok(rows)
    }

    /// Parses `metrics.tsv` back.
    pub fn parse_metrics(text: &str) -> Result<Vec<MetricRow>, EvalError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |m: String| EvalError::InvalidArgument(format!("metrics line {}: {m}", n + 1));
            if f.len() != 6 {
                return Err(bad(format!("{} fields", f.len())));
            }
            let task = f[1].parse::<Task>().map_err(|e| bad(e.to_string()))?;
            let approach = f[2].parse::<Approach>()?;
            let value = if f[4] == "NA" { None } else { Some(f[4].parse::<f64>().map_err(|e| bad(e.to_string()))?) };
            rows.push(MetricRow { target: f[0].into(), task, approach, metric: f[3].into(), value, note: f[5].into() });
        }
        Ok(rows)
    }
}
