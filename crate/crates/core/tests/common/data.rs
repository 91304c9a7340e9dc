use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use action_relations::data::{build_classification_split, build_detection_split, ingest_relations, Task, TaskSplit};
use action_relations::embedding::Modality;
use action_relations::rng::rng_for;
use action_relations::synth::generate;
use action_relations::training::{epoch_examples, train, Inputs, Target, TrainConfig};
use rand::Rng;

const DATASETS: [(&str, usize); 6] =
    [("ucf101", 101), ("hmdb51", 51), ("kinetics700", 700), ("stair_actions", 100), ("charades", 157), ("ava", 80)];

/// Catalog and relations files shaped like the full benchmark: six datasets
/// of the real sizes, and 320 equal, 1,470 similar and 1,010 is-a facts
/// written with duplicated rows in both orientations.
fn benchmark_shaped(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut catalog = String::from("dataset,action_id,label\n");
    for (d, n) in DATASETS {
        for i in 0..n {
            writeln!(catalog, "{d},a{i:03},{d} action {i}").unwrap();
        }
    }
    let mut rng = rng_for(21, &[]);
    let mut used = HashSet::new();
    let mut rows = String::from("from_dataset,from_action_name,to_dataset,to_action_name,relation\n");
    for (relation, count) in [("equal", 320), ("similar", 1470), ("is-a", 1010)] {
        let mut made = 0;
        while made < count {
            let (da, db) = (rng.random_range(0..6), rng.random_range(0..6));
            if da == db {
                continue;
            }
            let (a, b) = (rng.random_range(0..DATASETS[da].1), rng.random_range(0..DATASETS[db].1));
            let key = if (da, a) < (db, b) { (da, a, db, b) } else { (db, b, da, a) };
            if !used.insert(key) {
                continue;
            }
            let row = format!("{},a{a:03},{},a{b:03},{relation}\n", DATASETS[da].0, DATASETS[db].0);
            rows.push_str(&row);
            if made % 7 == 0 {
                rows.push_str(&row);
            }
            if made % 5 == 0 && relation != "is-a" {
                writeln!(rows, "{},a{b:03},{},a{a:03},{relation}", DATASETS[db].0, DATASETS[da].0).unwrap();
            }
            made += 1;
        }
    }
    let (c, r) = (dir.join("catalog.csv"), dir.join("relations.csv"));
    std::fs::write(&c, catalog).unwrap();
    std::fs::write(&r, rows).unwrap();
    (c, r)
}

pub fn benchmark_shaped_ingestion_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = benchmark_shaped(dir.path());
    let store = ingest_relations(&c, &r).unwrap();
    let s = store.summary();
    assert_eq!((s.equal, s.similar, s.is_a), (320, 1470, 1010));
    assert_eq!(s.labeled, 2800);
    let sizes: Vec<usize> = DATASETS.iter().map(|d| d.1).collect();
    let mut cross = 0;
    for i in 0..6 {
        for j in i + 1..6 {
            cross += sizes[i] * sizes[j];
        }
    }
    assert_eq!(s.unrelated, cross - 2800);
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn check_partition(split: &TaskSplit, store: &action_relations::RelationStore) {
    let cat = store.catalog();
    let source: BTreeSet<usize> = split.source_actions.iter().copied().collect();
    let target: BTreeSet<usize> = split.target_actions.iter().copied().collect();
    assert!(source.is_disjoint(&target));
    assert_eq!(source.len() + target.len(), cat.len());
    assert!(target.iter().all(|&i| cat.key(i).dataset == split.target));

    let train: Vec<_> = split.train.iter().map(|p| unordered(p.src, p.dst)).collect();
    let val: Vec<_> = split.val.iter().map(|p| unordered(p.src, p.dst)).collect();
    let labeled: BTreeSet<_> = train.iter().chain(&val).copied().collect();
    assert_eq!(labeled.len(), train.len() + val.len(), "a fact appears twice");
    let internal: BTreeSet<_> =
        store.iter().filter(|&(a, b, _)| source.contains(&a) && source.contains(&b)).map(|(a, b, _)| unordered(a, b)).collect();
    assert_eq!(labeled, internal);
    for p in split.train.iter().chain(&split.val) {
        assert_eq!(store.relation(p.src, p.dst), Some(p.relation));
    }

    for &(a, b) in &split.test {
        assert!(source.contains(&a) && target.contains(&b));
        assert!(!labeled.contains(&unordered(a, b)));
    }
    match split.task {
        Task::Detection => assert_eq!(split.test.len(), source.len() * target.len()),
        Task::Classification => {
            let annotated = store.iter().filter(|&(a, b, _)| source.contains(&a) != source.contains(&b)).count();
            assert_eq!(split.test.len(), annotated);
            assert!(split.test.iter().all(|&(a, b)| store.is_related(a, b)));
        }
    }
}

pub fn splits_partition_without_leakage_over_many_seeds() {
    let world = generate(&super::small_spec(5)).unwrap();
    for seed in 0..100 {
        for target in ["ds0", "ds1", "ds2"] {
            check_partition(&build_detection_split(&world.store, target, 0.15, seed).unwrap(), &world.store);
            check_partition(&build_classification_split(&world.store, target, 0.15, seed).unwrap(), &world.store);
        }
    }
}

pub fn negatives_avoid_positives_in_every_epoch() {
    let world = generate(&super::small_spec(6)).unwrap();
    let split = build_detection_split(&world.store, "ds2", 0.15, 3).unwrap();
    let mut cfg = TrainConfig::new(Task::Detection, Modality::Label);
    cfg.d_emb = 16;
    cfg.batch_size = 16;
    assert_eq!(cfg.epochs, 20);
    let positives = split.positive_set();
    let source: HashSet<usize> = split.source_actions.iter().copied().collect();
    let mut all_drawn = HashSet::new();
    for epoch in 1..=cfg.epochs {
        let examples = epoch_examples(&cfg, &split, epoch).unwrap();
        let negatives: Vec<_> = examples.iter().filter(|e| e.target == Target::Det(false)).map(|e| (e.src, e.dst)).collect();
        assert_eq!(negatives.len(), cfg.neg_multiplier * split.train.len());
        assert_eq!(negatives.iter().collect::<HashSet<_>>().len(), negatives.len(), "epoch {epoch}");
        for &(a, b) in &negatives {
            assert!(a != b && source.contains(&a) && source.contains(&b));
            assert!(!positives.contains(&(a, b)) && !world.store.is_related(a, b), "epoch {epoch}: {a},{b}");
        }
        all_drawn.extend(negatives);
    }
    assert!(all_drawn.len() > cfg.neg_multiplier * split.train.len(), "negatives are resampled");
    let out = train(&cfg, &split, &Inputs::new(world.catalog(), &world.labels), None).unwrap();
    assert_eq!(out.reports.len(), 20);
}
