mod common;

use std::path::Path;
use std::process::Command;

use action_relations::data::{build_classification_split, build_detection_split, Task};
use action_relations::embedding::{EmbeddingStore, Modality};
use action_relations::harness::{predict, read_pairs, write_scored, PredictModels};
use action_relations::kernel::Matrix;
use action_relations::synth::{generate, SynthWorld};
use action_relations::training::{train, write_run_dir, Inputs, TrainConfig};

fn trained_run(world: &SynthWorld, task: Task, modality: Modality, dir: &Path) {
    let split = match task {
        Task::Detection => build_detection_split(&world.store, "ds0", 0.15, 1),
        Task::Classification => build_classification_split(&world.store, "ds0", 0.15, 1),
    }
    .unwrap();
    let mut cfg = TrainConfig::new(task, modality);
    cfg.d_emb = 16;
    cfg.d_att = 8;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    let store = if modality == Modality::Label { &world.labels } else { &world.videos };
    let out = train(&cfg, &split, &Inputs::new(world.catalog(), store), None).unwrap();
    write_run_dir(dir, &cfg, &out).unwrap();
}

fn keys(world: &SynthWorld, n: usize) -> Vec<String> {
    (0..n).map(|i| world.catalog().key(i * 7 % world.catalog().len()).to_string()).collect()
}

fn set_of(store: &EmbeddingStore, raw: &str) -> Matrix<f32> {
    let v = store.vector(&raw.parse().unwrap()).unwrap();
    Matrix::from_rows(&[v.to_vec()]).unwrap()
}

#[test]
fn label_scores_match_the_model_and_sort_descending() {
    let world = generate(&common::small_spec(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (det_dir, cls_dir) = (dir.path().join("det"), dir.path().join("cls"));
    trained_run(&world, Task::Detection, Modality::Label, &det_dir);
    trained_run(&world, Task::Classification, Modality::Label, &cls_dir);
    let models = PredictModels::load(&det_dir, Some(&cls_dir)).unwrap();

    let k = keys(&world, 12);
    let mut pairs: Vec<(String, String)> = k.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    pairs.push(pairs[3].clone());
    pairs.push((k[0].clone(), "ds9/nothing".into()));
    let rows = predict(&models, &[&world.labels], &pairs, 30, 4).unwrap();
    assert_eq!(rows.len(), pairs.len());

    let last = rows.last().unwrap();
    assert!(last.error.is_some() && last.det.is_none() && last.cls.is_none());
    let scored: Vec<_> = rows.iter().filter(|r| r.error.is_none()).collect();
    assert_eq!(scored.len(), pairs.len() - 1);
    assert!(scored.windows(2).all(|w| w[0].det >= w[1].det));

    for r in &scored {
        let (a, b) = (set_of(&world.labels, &r.src), set_of(&world.labels, &r.dst));
        let hd = (models.det.encode(&a).unwrap(), models.det.encode(&b).unwrap());
        let det = models.det.predict_embedded(&hd.0, &hd.1).unwrap().det().unwrap();
        assert!((r.det.unwrap() - det).abs() < 1e-12);
        let cls = models.cls.as_ref().unwrap();
        let hc = (cls.encode(&a).unwrap(), cls.encode(&b).unwrap());
        let probs = cls.predict_embedded(&hc.0, &hc.1).unwrap().cls().unwrap();
        for (x, y) in r.cls.unwrap().iter().zip(&probs) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let dupes: Vec<_> = rows.iter().filter(|r| (r.src.clone(), r.dst.clone()) == pairs[3]).collect();
    assert_eq!(dupes.len(), 2);
    assert_eq!(dupes[0], dupes[1]);
}

#[test]
fn video_scores_do_not_depend_on_list_position() {
    let world = generate(&common::small_spec(10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trained_run(&world, Task::Detection, Modality::Video, dir.path());
    let models = PredictModels::load(dir.path(), None).unwrap();
    let k = keys(&world, 6);
    let pairs: Vec<(String, String)> = k.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    let mut reversed = pairs.clone();
    reversed.reverse();
    let (fw, bw) = (predict(&models, &[&world.videos], &pairs, 10, 5).unwrap(), predict(&models, &[&world.videos], &reversed, 10, 5).unwrap());
    assert_eq!(fw, bw);
    assert!(fw.iter().all(|r| r.error.is_none() && r.cls.is_none()));
    assert!(predict(&models, &[&world.labels], &pairs, 10, 5).is_err(), "a label store cannot feed a video model");
}

#[test]
fn loading_checks_the_task() {
    let world = generate(&common::small_spec(11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trained_run(&world, Task::Classification, Modality::Label, dir.path());
    assert!(PredictModels::load(dir.path(), None).unwrap_err().is_validation());
}

#[test]
fn pair_files_and_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pairs.tsv");
    std::fs::write(&p, "src\tdst\n# comment\n\nds0/a, ds1/b\nds1/c\tds2/d\n").unwrap();
    assert_eq!(read_pairs(&p).unwrap(), vec![("ds0/a".into(), "ds1/b".into()), ("ds1/c".into(), "ds2/d".into())]);
    std::fs::write(&p, "ds0/a\tds1/b\tds2/c\n").unwrap();
    assert!(read_pairs(&p).is_err());

    let out = dir.path().join("scored.tsv");
    write_scored(&out, &[], false).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "src\tdst\tp_related\terror\n");
    write_scored(&out, &[], true).unwrap();
    let header = std::fs::read_to_string(&out).unwrap();
    assert_eq!(header.lines().count(), 1);
    assert!(header.contains("\tp_superclass_of\targmax\terror"));
}

#[test]
fn cli_writes_a_ranked_table() {
    let world = generate(&common::small_spec(12)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = world.write(&dir.path().join("world")).unwrap();
    let run = dir.path().join("det");
    trained_run(&world, Task::Detection, Modality::Label, &run);
    let k = keys(&world, 5);
    let pairs = dir.path().join("pairs.tsv");
    std::fs::write(&pairs, format!("{}\t{}\n{}\t{}\n{}\tds0/missing\n", k[0], k[1], k[2], k[3], k[4])).unwrap();
    let out = dir.path().join("scored.tsv");
    let status = Command::new(env!("CARGO_BIN_EXE_actrel"))
        .args(["predict", "--det-run"])
        .arg(&run)
        .arg("--store")
        .arg(&paths.labels)
        .arg("--pairs")
        .arg(&pairs)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "src\tdst\tp_related\terror");
    assert!(lines[3].contains("ds0/missing\tNA\t"));
    let p: Vec<f64> = lines[1..3].iter().map(|l| l.split('\t').nth(2).unwrap().parse().unwrap()).collect();
    assert!(p[0] >= p[1]);
}
