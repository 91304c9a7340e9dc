use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::HarnessError;
use crate::data::{ActionKey, Task};
use crate::embedding::{EmbeddingStore, Modality};
use crate::kernel::{Checkpoint, Matrix};
use crate::model::{read_meta, to_prediction, RelationModel};
use crate::rng::{derive_seed, tag};

/// A detection model and optionally a classification model, each loaded from
/// a run directory holding `best.aprm` and `best.meta`.
#[derive(Debug)]
pub struct PredictModels {
    pub det: RelationModel<f32>,
    pub cls: Option<RelationModel<f32>>,
}

fn load_run(dir: &Path, task: Task) -> Result<RelationModel<f32>, HarnessError> {
    let config = read_meta(&dir.join("best.meta"))?;
    if config.task != task {
        return Err(HarnessError::Validation(format!("{} holds a {} model, expected {task}", dir.display(), config.task)));
    }
    let ck = Checkpoint::read(&dir.join("best.aprm"))?;
    Ok(RelationModel::from_checkpoint(config, &ck)?)
}

impl PredictModels {
    pub fn load(det_dir: &Path, cls_dir: Option<&Path>) -> Result<Self, HarnessError> {
        Ok(PredictModels { det: load_run(det_dir, Task::Detection)?, cls: cls_dir.map(|d| load_run(d, Task::Classification)).transpose()? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub src: String,
    pub dst: String,
    pub det: Option<f64>,
    pub cls: Option<[f64; 4]>,
    pub error: Option<String>,
}

/// Pairs as `src<TAB>dst` (or comma separated) action keys. Blank lines,
/// `#` comments and a `src`/`dst` header are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(['\t', ',']).map(str::trim);
        match (fields.next(), fields.next(), fields.next()) {
            (Some("src"), Some("dst"), None) if out.is_empty() => {}
            (Some(a), Some(b), None) => out.push((a.to_string(), b.to_string())),
            _ => return Err(HarnessError::Validation(format!("{} line {}: expected two action keys", path.display(), n + 1))),
        }
    }
    Ok(out)
}

struct Encoder<'a> {
    model: &'a RelationModel<f32>,
    store: &'a EmbeddingStore,
    k: usize,
    seed: u64,
    cache: HashMap<String, Result<Vec<f32>, String>>,
}

impl Encoder<'_> {
    /// Clip draws depend only on the key, so a pair scores the same wherever
    /// it appears in the list.
    fn embed(&mut self, raw: &str) -> Result<Vec<f32>, String> {
        if let Some(r) = self.cache.get(raw) {
            return r.clone();
        }
        let r = (|| {
            let key: ActionKey = raw.parse().map_err(|e: crate::data::DataError| e.to_string())?;
            let rows = match self.store.modality() {
                Modality::Label => vec![self.store.vector(&key).map_err(|e| e.to_string())?.to_vec()],
                Modality::Video => {
                    let seed = derive_seed(self.seed, &[tag("predict-clips"), tag(raw)]);
                    self.store.sample_videos(&key, self.k, seed).map_err(|e| e.to_string())?.vectors
                }
            };
            let set = Matrix::from_vec(rows.len(), self.store.dim(), rows.concat()).map_err(|e| e.to_string())?;
            self.model.encode(&set).map_err(|e| e.to_string())
        })();
        self.cache.insert(raw.to_string(), r.clone());
        r
    }

    fn score(&mut self, a: &str, b: &str) -> Result<Vec<f32>, String> {
        let (hi, hj) = (self.embed(a)?, self.embed(b)?);
        self.model.logits(&hi, &hj).map_err(|e| e.to_string())
    }
}

fn store_for<'a>(model: &RelationModel<f32>, stores: &[&'a EmbeddingStore]) -> Result<&'a EmbeddingStore, HarnessError> {
    let c = &model.config;
    stores
        .iter()
        .find(|s| s.modality() == c.modality && s.dim() == c.input_dim)
        .copied()
        .ok_or_else(|| HarnessError::Validation(format!("no {} store of dimension {} for the {} model", c.modality, c.input_dim, c.task)))
}

/// Scores every pair, sorted by descending detection probability. Rows whose
/// actions are missing or malformed carry an error and sort last.
pub fn predict(
    models: &PredictModels,
    stores: &[&EmbeddingStore],
    pairs: &[(String, String)],
    k: usize,
    seed: u64,
) -> Result<Vec<ScoredPair>, HarnessError> {
    let mut det = Encoder { model: &models.det, store: store_for(&models.det, stores)?, k, seed, cache: HashMap::new() };
    let mut cls = match &models.cls {
        Some(m) => Some(Encoder { model: m, store: store_for(m, stores)?, k, seed, cache: HashMap::new() }),
        None => None,
    };
    let mut rows: Vec<ScoredPair> = pairs
        .iter()
        .map(|(a, b)| {
            let d = det.score(a, b).map(|l| to_prediction(Task::Detection, &l).det().unwrap());
            let c = cls.as_mut().map(|e| e.score(a, b).map(|l| to_prediction(Task::Classification, &l).cls().unwrap()));
            let error = d.as_ref().err().or(c.as_ref().and_then(|r| r.as_ref().err())).cloned();
            ScoredPair {
                src: a.clone(),
                dst: b.clone(),
                det: if error.is_none() { d.ok() } else { None },
                cls: if error.is_none() { c.and_then(Result::ok) } else { None },
                error,
            }
        })
        .collect();
    rows.sort_by(|x, y| match (x.det, y.det) {
        (Some(a), Some(b)) => b.total_cmp(&a),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// TSV with `p_related`, then the four class probabilities and `argmax` when
/// a classification model was given, then `error`.
pub fn write_scored(path: &Path, rows: &[ScoredPair], with_cls: bool) -> Result<(), HarnessError> {
    let mut s = String::from("src\tdst\tp_related");
    if with_cls {
        s.push_str("\tp_equal\tp_similar\tp_subclass_of\tp_superclass_of\targmax");
    }
    s.push_str("\terror\n");
    for r in rows {
        write!(s, "{}\t{}\t{}", r.src, r.dst, r.det.map_or("NA".into(), |v| format!("{v:.6}"))).unwrap();
        if with_cls {
            match r.cls {
                Some(p) => {
                    for v in p {
                        write!(s, "\t{v:.6}").unwrap();
                    }
                    let top = crate::eval::argmax(&p);
                    write!(s, "\t{}", crate::data::RelationType::from_index(top).unwrap().name()).unwrap();
                }
                None => s.push_str("\tNA\tNA\tNA\tNA\tNA"),
            }
        }
        writeln!(s, "\t{}", r.error.as_deref().unwrap_or("")).unwrap();
    }
    std::fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}
