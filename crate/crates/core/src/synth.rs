//! Synthetic multi-dataset worlds with planted relations.
//!
//! Concepts form a forest. One *shared family* appears in every dataset: a
//! chain `root → … → hub` with leaf concepts under the hub, so every pair of
//! family concepts is related (equal, similar or is-a). The remaining
//! concepts form per-dataset private trees, which never relate across
//! datasets. Relation rules for a cross-dataset pair of actions:
//!
//! - same concept: `equal`
//! - one concept an ancestor of the other: `is-a` (the descendant is the hyponym)
//! - same parent: `similar`
//!
//! Label vectors are the concept vector plus Gaussian noise; each video clip
//! is a fixed random projection of the concept vector plus (larger) noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{normalize_label, ActionClass, ActionKey, Catalog, DataError, Orientation, RelationStore, RelationType};
use crate::embedding::{EmbeddingError, EmbeddingStore, Modality};
use crate::kv::{KvError, Section};
use crate::rng::{rng_for, tag};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_datasets: usize,
    pub actions_per_dataset: usize,
    pub n_concepts: usize,
    pub concept_hierarchy_depth: usize,
    pub label_dim: usize,
    pub video_dim: usize,
    pub clips_min: usize,
    pub clips_max: usize,
    pub sigma_label: f64,
    pub sigma_video: f64,
    /// Norm of every concept vector.
    pub concept_scale: f64,
    /// Cosine between a child concept vector and its parent's; 0 draws every
    /// concept independently.
    pub parent_similarity: f64,
    /// Cosine between every private root concept and a common background
    /// direction; 0 leaves private roots independent.
    pub background_similarity: f64,
    /// Concepts in the shared family.
    pub shared_concepts: usize,
    /// Actions per dataset drawn from the shared family.
    pub shared_actions_per_dataset: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// The desk spec: 3 datasets × 50 actions, 30 concepts, depth 3.
    fn default() -> Self {
        SynthSpec {
            n_datasets: 3,
            actions_per_dataset: 50,
            n_concepts: 30,
            concept_hierarchy_depth: 3,
            label_dim: 768,
            video_dim: 2304,
            clips_min: 5,
            clips_max: 15,
            sigma_label: 0.1,
            sigma_video: 0.3,
            concept_scale: 5.0,
            parent_similarity: 0.7,
            background_similarity: 0.7,
            shared_concepts: 8,
            shared_actions_per_dataset: 12,
            seed: 7,
        }
    }
}

macro_rules! spec_fields {
    ($m:ident) => {
        $m!(n_datasets, actions_per_dataset, n_concepts, concept_hierarchy_depth, label_dim, video_dim, clips_min,
            clips_max, sigma_label, sigma_video, concept_scale, parent_similarity, background_similarity, shared_concepts, shared_actions_per_dataset, seed)
    };
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Infeasible(m));
        if self.n_datasets == 0 || self.actions_per_dataset == 0 {
            return fail("need at least one dataset with one action".into());
        }
        if self.n_concepts == 0 || self.n_concepts > self.n_datasets * self.actions_per_dataset {
            return fail(format!(
                "{} concepts for {} actions",
                self.n_concepts,
                self.n_datasets * self.actions_per_dataset
            ));
        }
        if self.shared_concepts > self.n_concepts {
            return fail("more shared concepts than concepts".into());
        }
        if self.shared_actions_per_dataset > self.actions_per_dataset {
            return fail("more shared actions than actions per dataset".into());
        }
        if (self.shared_concepts == 0) != (self.shared_actions_per_dataset == 0) {
            return fail("shared concepts and shared actions must both be zero or both positive".into());
        }
        let private = self.n_concepts - self.shared_concepts;
        let private_actions = self.actions_per_dataset - self.shared_actions_per_dataset;
        if private_actions > 0 && private == 0 {
            return fail("private actions need private concepts".into());
        }
        if private.div_ceil(self.n_datasets) > private_actions && private > 0 {
            return fail(format!("{private} private concepts cannot be spread over {private_actions} actions per dataset"));
        }
        if self.concept_hierarchy_depth == 0 || self.label_dim == 0 || self.video_dim == 0 {
            return fail("depth and dimensions must be positive".into());
        }
        if self.clips_min == 0 || self.clips_min > self.clips_max {
            return fail("clip range must satisfy 1 <= min <= max".into());
        }
        if self.sigma_label < 0.0 || self.sigma_video < 0.0 || self.concept_scale <= 0.0 {
            return fail("noise levels must be non-negative and the scale positive".into());
        }
        if !(0.0..1.0).contains(&self.parent_similarity) || !(0.0..1.0).contains(&self.background_similarity) {
            return fail("similarities must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::default();
        macro_rules! put {
            ($($f:ident),*) => { $( s.set(stringify!($f), self.$f); )* };
        }
        spec_fields!(put);
        s
    }

    /// Keys of `s` override the defaults; unknown keys are rejected.
    pub fn from_section(s: &Section) -> Result<Self, SynthError> {
        let mut spec = SynthSpec::default();
        macro_rules! get {
            ($($f:ident),*) => { $( if let Some(v) = s.parse(stringify!($f))? { spec.$f = v; } )* };
        }
        spec_fields!(get);
        macro_rules! known {
            ($($f:ident),*) => { [$(stringify!($f)),*] };
        }
        let names = spec_fields!(known);
        if let Some(k) = s.entries.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(KvError::Unknown(k.clone()).into());
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub parent: Option<usize>,
    pub depth: usize,
    /// `None` for the shared family, else the owning dataset.
    pub owner: Option<String>,
}

/// Oriented relation `a → b` implied by the concept forest.
pub fn concept_relation(concepts: &[Concept], a: usize, b: usize) -> Option<RelationType> {
    let is_ancestor = |anc: usize, mut node: usize| {
        while let Some(p) = concepts[node].parent {
            if p == anc {
                return true;
            }
            node = p;
        }
        false
    };
    if a == b {
        Some(RelationType::Equal)
    } else if is_ancestor(a, b) {
        Some(RelationType::SuperclassOf)
    } else if is_ancestor(b, a) {
        Some(RelationType::SubclassOf)
    } else if concepts[a].parent.is_some() && concepts[a].parent == concepts[b].parent {
        Some(RelationType::Similar)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub spec: SynthSpec,
    pub concepts: Vec<Concept>,
    /// Concept of every catalog action, by catalog index.
    pub assignment: Vec<usize>,
    pub store: RelationStore,
    pub labels: EmbeddingStore,
    pub videos: EmbeddingStore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub catalog: PathBuf,
    pub relations: PathBuf,
    pub labels: PathBuf,
    pub videos: PathBuf,
    pub manifest: PathBuf,
    pub spec: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SynthPaths {
            catalog: dir.join("catalog.csv"),
            relations: dir.join("relations.csv"),
            labels: dir.join("label.aemb"),
            videos: dir.join("video.aemb"),
            manifest: dir.join("manifest.tsv"),
            spec: dir.join("spec.txt"),
        }
    }
}

pub fn dataset_name(i: usize) -> String {
    format!("ds{i}")
}

fn sphere(dim: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x * scale / n).collect();
        }
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn raw_label(concept: usize, variant: usize, style: usize) -> String {
    match style % 3 {
        0 => format!("Concept{concept}Variant{variant}"),
        1 => format!("concept_{concept}_variant_{variant}"),
        _ => format!("Concept_{concept}_Variant{variant}"),
    }
}

fn build_concepts(spec: &SynthSpec, rng: &mut impl Rng) -> Vec<Concept> {
    let mut concepts = Vec::with_capacity(spec.n_concepts);
    // shared family: a chain of depth-1 nodes, remaining concepts are leaves under the last
    let chain = spec.shared_concepts.min(spec.concept_hierarchy_depth.saturating_sub(1).max(1));
    for i in 0..spec.shared_concepts {
        let (parent, depth) = if i == 0 {
            (None, 0)
        } else if i < chain {
            (Some(i - 1), i)
        } else {
            (Some(chain - 1), chain)
        };
        concepts.push(Concept { parent, depth, owner: None });
    }
    let private = spec.n_concepts - spec.shared_concepts;
    for p in 0..private {
        let owner = dataset_name(p % spec.n_datasets);
        let candidates: Vec<usize> = (spec.shared_concepts..concepts.len())
            .filter(|&c| concepts[c].owner.as_deref() == Some(owner.as_str()) && concepts[c].depth + 1 < spec.concept_hierarchy_depth)
            .collect();
        let parent = if candidates.is_empty() || rng.random_bool(0.3) { None } else { Some(candidates[rng.random_range(0..candidates.len())]) };
        let depth = parent.map_or(0, |q| concepts[q].depth + 1);
        concepts.push(Concept { parent, depth, owner: Some(owner) });
    }
    concepts
}

/// Assign `n` slots to `pool`, covering every concept once when possible.
fn assign(pool: &[usize], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out: Vec<usize> = pool.iter().copied().cycle().take(n.min(pool.len())).collect();
    while out.len() < n {
        out.push(pool[rng.random_range(0..pool.len())]);
    }
    out.shuffle(rng);
    out
}

pub fn generate(spec: &SynthSpec) -> Result<SynthWorld, SynthError> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, &[tag("synth/structure")]);
    let concepts = build_concepts(spec, &mut rng);

    let shared: Vec<usize> = (0..spec.shared_concepts).collect();
    let mut actions = Vec::new();
    let mut concept_of: BTreeMap<ActionKey, usize> = BTreeMap::new();
    for d in 0..spec.n_datasets {
        let name = dataset_name(d);
        let private: Vec<usize> =
            (spec.shared_concepts..concepts.len()).filter(|&c| concepts[c].owner.as_deref() == Some(name.as_str())).collect();
        let mut slots = assign(&shared, spec.shared_actions_per_dataset, &mut rng);
        let n_private = spec.actions_per_dataset - spec.shared_actions_per_dataset;
        if n_private > 0 {
            slots.extend(assign(&private, n_private, &mut rng));
        }
        slots.shuffle(&mut rng);
        let mut variants: BTreeMap<usize, usize> = BTreeMap::new();
        for (a, &c) in slots.iter().enumerate() {
            let v = variants.entry(c).or_insert(0);
            *v += 1;
            let key = ActionKey::new(name.clone(), format!("a{a:03}"));
            let raw = raw_label(c, *v, a + d);
            actions.push(ActionClass { key: key.clone(), normalized_label: normalize_label(&raw)?, raw_label: raw });
            concept_of.insert(key, c);
        }
    }
    let catalog = Catalog::from_actions(actions)?;
    let assignment: Vec<usize> = catalog.actions().iter().map(|a| concept_of[&a.key]).collect();

    let mut store = RelationStore::empty(catalog.clone());
    for a in 0..catalog.len() {
        for b in a + 1..catalog.len() {
            if catalog.key(a).dataset == catalog.key(b).dataset {
                continue;
            }
            if let Some(r) = concept_relation(&concepts, assignment[a], assignment[b]) {
                store.insert(a, b, r)?;
            }
        }
    }

    let mut vrng = rng_for(spec.seed, &[tag("synth/vectors")]);
    let background = sphere(spec.label_dim, spec.concept_scale, &mut vrng);
    let mut concept_vecs: Vec<Vec<f64>> = Vec::with_capacity(concepts.len());
    for c in &concepts {
        let fresh = sphere(spec.label_dim, 1.0, &mut vrng);
        let anchor = match c.parent {
            Some(q) => Some((&concept_vecs[q], spec.parent_similarity)),
            None if c.owner.is_some() => Some((&background, spec.background_similarity)),
            None => None,
        };
        let dir: Vec<f64> = match anchor {
            Some((v, a)) if a > 0.0 => {
                let b = (1.0 - a * a).sqrt();
                v.iter().zip(&fresh).map(|(p, f)| a * p / spec.concept_scale + b * f).collect()
            }
            _ => fresh,
        };
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        concept_vecs.push(dir.into_iter().map(|x| x * spec.concept_scale / n).collect());
    }
    let proj = Normal::new(0.0, (1.0 / spec.video_dim as f64).sqrt()).expect("positive std");
    let p: Vec<f64> = (0..spec.video_dim * spec.label_dim).map(|_| proj.sample(&mut vrng)).collect();
    let projected: Vec<Vec<f64>> = concept_vecs
        .iter()
        .map(|c| (0..spec.video_dim).map(|r| p[r * spec.label_dim..(r + 1) * spec.label_dim].iter().zip(c).map(|(a, b)| a * b).sum()).collect())
        .collect();

    let mut labels = EmbeddingStore::new(Modality::Label, spec.label_dim)?;
    let mut videos = EmbeddingStore::new(Modality::Video, spec.video_dim)?;
    for (i, action) in catalog.actions().iter().enumerate() {
        let c = assignment[i];
        let mut arng = rng_for(spec.seed, &[tag("synth/action"), i as u64]);
        let label = concept_vecs[c]
            .iter()
            .map(|&x| (x + spec.sigma_label * gauss(&mut arng)) as f32)
            .collect();
        labels.insert(action.key.clone(), vec![label])?;
        let clips = arng.random_range(spec.clips_min..=spec.clips_max);
        let vecs = (0..clips)
            .map(|_| {
                projected[c]
                    .iter()
                    .map(|&x| (x + spec.sigma_video * gauss(&mut arng)) as f32)
                    .collect()
            })
            .collect();
        videos.insert(action.key.clone(), vecs)?;
    }
    Ok(SynthWorld { spec: spec.clone(), concepts, assignment, store, labels, videos })
}

impl SynthWorld {
    pub fn catalog(&self) -> &Catalog {
        self.store.catalog()
    }

    /// `action<TAB>concept<TAB>parent<TAB>depth<TAB>owner`, one line per action.
    pub fn manifest(&self) -> String {
        let mut s = String::from("action\tconcept\tparent\tdepth\towner\n");
        for (i, a) in self.catalog().actions().iter().enumerate() {
            let c = &self.concepts[self.assignment[i]];
            let parent = c.parent.map_or("-".to_string(), |p| p.to_string());
            let owner = c.owner.as_deref().unwrap_or("shared");
            writeln!(s, "{}\t{}\t{parent}\t{}\t{owner}", a.key, self.assignment[i], c.depth).unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<SynthPaths, SynthError> {
        let io = |path: &Path, source| SynthError::Io { path: path.display().to_string(), source };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        let mut buf = Vec::new();
        self.catalog().write_csv(&mut buf)?;
        std::fs::write(&paths.catalog, &buf).map_err(|e| io(&paths.catalog, e))?;
        let mut buf = Vec::new();
        self.store.write_relations_csv(&mut buf, Orientation::Canonical)?;
        std::fs::write(&paths.relations, &buf).map_err(|e| io(&paths.relations, e))?;
        self.labels.write(&paths.labels)?;
        self.videos.write(&paths.videos)?;
        std::fs::write(&paths.manifest, self.manifest()).map_err(|e| io(&paths.manifest, e))?;
        let doc = crate::kv::KvDocument { root: self.spec.to_section(), ..Default::default() };
        std::fs::write(&paths.spec, doc.render()).map_err(|e| io(&paths.spec, e))?;
        Ok(paths)
    }
}
