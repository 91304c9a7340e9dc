use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::{ActionIdx, ActionKey, DataError, RelationStore, RelationType, Task};
use crate::rng::{rng_for, tag};

pub const DEFAULT_VAL_FRACTION: f64 = 0.15;

/// An ordered pair with its relation read from `src` towards `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub src: ActionIdx,
    pub dst: ActionIdx,
    pub relation: RelationType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitWarning {
    /// Some relation type had a single source-internal example, so the
    /// classification split fell back to an unstratified draw.
    StratificationFallback(RelationType),
    /// No annotated pair exists among source actions.
    EmptyRelatedSet,
}

/// Source/target partition of the catalog plus train/val/test pairs.
///
/// Detection splits hold positives only; negatives are sampled during
/// training. Test pairs are unlabeled: detection uses every source×target
/// pair, classification only the annotated ones (oriented source→target).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSplit {
    pub task: Task,
    pub target: String,
    pub seed: u64,
    pub val_fraction: f64,
    pub source_actions: Vec<ActionIdx>,
    pub target_actions: Vec<ActionIdx>,
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<(ActionIdx, ActionIdx)>,
    pub warnings: Vec<SplitWarning>,
}

impl TaskSplit {
    /// Every labeled (train ∪ val) pair in both orientations.
    pub fn positive_set(&self) -> HashSet<(ActionIdx, ActionIdx)> {
        self.train.iter().chain(&self.val).flat_map(|p| [(p.src, p.dst), (p.dst, p.src)]).collect()
    }
}

fn val_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

fn check_args(store: &RelationStore, target: &str, val_fraction: f64) -> Result<(Vec<ActionIdx>, Vec<ActionIdx>), DataError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!("val_fraction must be in (0, 1), got {val_fraction}")));
    }
    let catalog = store.catalog();
    let target_actions = catalog.actions_of(target);
    if target_actions.is_empty() {
        return Err(DataError::InvalidArgument(format!("target dataset `{target}` has no actions")));
    }
    let source_actions = (0..catalog.len()).filter(|&i| catalog.key(i).dataset != target).collect();
    Ok((source_actions, target_actions))
}

fn source_internal(store: &RelationStore, target: &str) -> Vec<LabeledPair> {
    let catalog = store.catalog();
    store
        .iter()
        .filter(|&(a, b, _)| catalog.key(a).dataset != target && catalog.key(b).dataset != target)
        .map(|(src, dst, relation)| LabeledPair { src, dst, relation })
        .collect()
}

/// Plain random train/val split of source-internal positives; test is the
/// full source × target product.
pub fn build_detection_split(
    store: &RelationStore,
    target: &str,
    val_fraction: f64,
    seed: u64,
) -> Result<TaskSplit, DataError> {
    let (source_actions, target_actions) = check_args(store, target, val_fraction)?;
    let mut positives = source_internal(store, target);
    let mut rng = rng_for(seed, &[tag("split/det")]);
    positives.shuffle(&mut rng);
    let n_val = val_count(positives.len(), val_fraction);
    let train = positives.split_off(n_val);
    let val = positives;
    let test = source_actions
        .iter()
        .flat_map(|&s| target_actions.iter().map(move |&t| (s, t)))
        .collect();
    let warnings = if train.is_empty() && val.is_empty() { vec![SplitWarning::EmptyRelatedSet] } else { vec![] };
    Ok(TaskSplit {
        task: Task::Detection,
        target: target.to_string(),
        seed,
        val_fraction,
        source_actions,
        target_actions,
        train,
        val,
        test,
        warnings,
    })
}

/// Split stratified by (direction-resolved) relation type. Test pairs are
/// the annotated source×target pairs.
pub fn build_classification_split(
    store: &RelationStore,
    target: &str,
    val_fraction: f64,
    seed: u64,
) -> Result<TaskSplit, DataError> {
    let (source_actions, target_actions) = check_args(store, target, val_fraction)?;
    let labeled = source_internal(store, target);
    let mut rng = rng_for(seed, &[tag("split/cls")]);
    let mut warnings = Vec::new();

    let mut groups: [Vec<LabeledPair>; RelationType::COUNT] = Default::default();
    for p in &labeled {
        groups[p.relation.index()].push(*p);
    }
    let thin = RelationType::ALL.iter().copied().find(|r| groups[r.index()].len() == 1);

    let (mut train, mut val) = (Vec::new(), Vec::new());
    if labeled.is_empty() {
        warnings.push(SplitWarning::EmptyRelatedSet);
    } else if let Some(r) = thin {
        warnings.push(SplitWarning::StratificationFallback(r));
        let mut all = labeled;
        all.shuffle(&mut rng);
        let n_val = val_count(all.len(), val_fraction);
        train = all.split_off(n_val);
        val = all;
    } else {
        for group in groups.iter_mut() {
            group.shuffle(&mut rng);
            let n_val = val_count(group.len(), val_fraction);
            val.extend(group.drain(..n_val));
            train.append(group);
        }
        train.shuffle(&mut rng);
        val.shuffle(&mut rng);
    }

    let catalog = store.catalog();
    let mut test: Vec<(ActionIdx, ActionIdx)> = store
        .iter()
        .filter_map(|(a, b, _)| {
            match (catalog.key(a).dataset == target, catalog.key(b).dataset == target) {
                (false, true) => Some((a, b)),
                (true, false) => Some((b, a)),
                _ => None,
            }
        })
        .collect();
    test.sort_unstable();

    Ok(TaskSplit {
        task: Task::Classification,
        target: target.to_string(),
        seed,
        val_fraction,
        source_actions,
        target_actions,
        train,
        val,
        test,
        warnings,
    })
}

/// Per-type frequencies of a labeled pair list.
pub fn class_prior(pairs: &[LabeledPair]) -> Result<[f64; RelationType::COUNT], DataError> {
    if pairs.is_empty() {
        return Err(DataError::InvalidArgument("class prior of an empty pair list".into()));
    }
    let mut counts = [0usize; RelationType::COUNT];
    for p in pairs {
        counts[p.relation.index()] += 1;
    }
    let n = pairs.len() as f64;
    Ok(counts.map(|c| c as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitLine {
    pub src: ActionKey,
    pub dst: ActionKey,
    pub label: Option<RelationType>,
    pub partition: Partition,
}

/// One pair per line: `src<TAB>dst<TAB>label_or_dash<TAB>partition`.
pub fn write_split_file<W: Write>(mut w: W, store: &RelationStore, split: &TaskSplit) -> std::io::Result<()> {
    let catalog = store.catalog();
    for (part, pairs) in [(Partition::Train, &split.train), (Partition::Val, &split.val)] {
        for p in pairs {
            writeln!(w, "{}\t{}\t{}\t{}", catalog.key(p.src), catalog.key(p.dst), p.relation, part)?;
        }
    }
    for &(s, t) in &split.test {
        writeln!(w, "{}\t{}\t-\t{}", catalog.key(s), catalog.key(t), Partition::Test)?;
    }
    Ok(())
}

pub fn read_split_file(path: &Path) -> Result<Vec<SplitLine>, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
        let lineno = i as u64 + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse { line: lineno, message: "expected 4 tab-separated fields".into() });
        }
        let bad = |m: String| DataError::Parse { line: lineno, message: m };
        let label = match fields[2] {
            "-" => None,
            s => Some(s.parse::<RelationType>().map_err(|e| bad(e.to_string()))?),
        };
        let partition = match fields[3] {
            "train" => Partition::Train,
            "val" => Partition::Val,
            "test" => Partition::Test,
            p => return Err(bad(format!("unknown partition `{p}`"))),
        };
        out.push(SplitLine {
            src: fields[0].parse().map_err(|e: DataError| bad(e.to_string()))?,
            dst: fields[1].parse().map_err(|e: DataError| bad(e.to_string()))?,
            label,
            partition,
        });
    }
    Ok(out)
}
