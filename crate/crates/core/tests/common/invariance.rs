use action_relations::data::{build_detection_split, Task};
use action_relations::embedding::Modality;
use action_relations::kernel::Matrix;
use action_relations::model::{pi, ModelConfig, Pooling, PoolingKind, RelationModel};
use action_relations::rng::rng_for;
use action_relations::synth::{generate, SynthSpec};
use action_relations::training::{predict_pairs, train, Inputs, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

fn permuted(e: &Matrix<f64>, order: &[usize]) -> Matrix<f64> {
    e.select_rows(order)
}

pub fn pooling_ignores_clip_order() {
    let mut rng = rng_for(5, &[]);
    let d = 12;
    let attention = Pooling::<f64>::new(PoolingKind::Attention, d, 6, &mut rng);
    for trial in 0..100 {
        let k = rng.random_range(1..=30);
        let e = super::random_set(&mut rng, k, d);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let p = permuted(&e, &order);

        assert_eq!(Pooling::<f64>::Max.pool(&e).unwrap(), Pooling::<f64>::Max.pool(&p).unwrap(), "trial {trial}");
        for pool in [&Pooling::<f64>::Mean, &attention] {
            let (a, b) = (pool.pool(&e).unwrap(), pool.pool(&p).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-6, "{:?} trial {trial}: {x} vs {y}", pool.kind());
            }
        }
        let w = attention.attention_weights(&e).unwrap();
        let wp = attention.attention_weights(&p).unwrap();
        for (i, &j) in order.iter().enumerate() {
            assert!((wp[i] - w[j]).abs() <= 1e-12);
        }
    }
}

fn model(task: Task, modality: Modality, seed: u64) -> RelationModel<f64> {
    let mut c = ModelConfig::new(task, modality, 10);
    c.d_emb = 16;
    c.d_att = 8;
    c.hidden_layers = 2;
    c.pooling = (modality == Modality::Video).then_some(PoolingKind::Attention);
    RelationModel::new(c, seed).unwrap()
}

pub fn detection_is_exactly_symmetric() {
    let mut rng = rng_for(6, &[]);
    for modality in [Modality::Label, Modality::Video] {
        let m = model(Task::Detection, modality, 1);
        let rows = if modality == Modality::Video { 7 } else { 1 };
        for _ in 0..100 {
            let (a, b) = (super::random_set(&mut rng, rows, 10), super::random_set(&mut rng, rows, 10));
            assert_eq!(super::detect(&m, &a, &b).to_bits(), super::detect(&m, &b, &a).to_bits());
        }
    }
}

pub fn classification_swaps_the_is_a_directions() {
    let mut rng = rng_for(7, &[]);
    for modality in [Modality::Label, Modality::Video] {
        let m = model(Task::Classification, modality, 2);
        let rows = if modality == Modality::Video { 5 } else { 1 };
        for _ in 0..100 {
            let (a, b) = (super::random_set(&mut rng, rows, 10), super::random_set(&mut rng, rows, 10));
            let (ij, ji) = (super::classify(&m, &a, &b), super::classify(&m, &b, &a));
            for (x, y) in pi(&ij).iter().zip(&ji) {
                assert!((x - y).abs() <= 1e-6, "{ij:?} vs {ji:?}");
            }
        }
    }
}

pub fn classification_symmetry_holds_for_trained_f32_models() {
    let spec = SynthSpec { clips_min: 3, clips_max: 6, ..super::small_spec(4) };
    let world = generate(&spec).unwrap();
    let split = action_relations::data::build_classification_split(&world.store, "ds1", 0.15, 1).unwrap();
    let mut cfg = TrainConfig::new(Task::Classification, Modality::Label);
    cfg.d_emb = 16;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    let inputs = Inputs::new(world.catalog(), &world.labels);
    let out = train(&cfg, &split, &inputs, None).unwrap();
    let pairs: Vec<_> = split.test.iter().take(40).copied().collect();
    let flipped: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
    let fw = predict_pairs(&out.model, &inputs, &pairs, 1, 0, "t").unwrap();
    let bw = predict_pairs(&out.model, &inputs, &flipped, 1, 0, "t").unwrap();
    for (f, b) in fw.iter().zip(&bw) {
        for (x, y) in pi(&f.cls().unwrap()).iter().zip(&b.cls().unwrap()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}

pub fn trained_video_encoder_accepts_any_k() {
    let spec = SynthSpec { clips_min: 30, clips_max: 36, ..super::small_spec(3) };
    let world = generate(&spec).unwrap();
    let split = build_detection_split(&world.store, "ds0", 0.15, 1).unwrap();
    let mut cfg = TrainConfig::new(Task::Detection, Modality::Video);
    cfg.d_emb = 16;
    cfg.d_att = 8;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.k_trainval = 10;
    let inputs = Inputs::new(world.catalog(), &world.videos);
    let out = train(&cfg, &split, &inputs, None).unwrap();
    let pairs: Vec<_> = split.test.iter().take(50).copied().collect();
    let at10 = predict_pairs(&out.model, &inputs, &pairs, 10, 0, "k").unwrap();
    let at30 = predict_pairs(&out.model, &inputs, &pairs, 30, 0, "k").unwrap();
    assert_eq!(at10.len(), at30.len());
    for p in at10.iter().chain(&at30) {
        let v = p.det().unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }
    assert_ne!(at10, at30);

    let key = world.catalog().key(pairs[0].0).clone();
    for k in [1, 10, 30] {
        let set = world.videos.sample_videos(&key, k, 1).unwrap();
        assert_eq!(set.vectors.len(), k);
        let m = Matrix::<f32>::from_rows(&set.vectors).unwrap();
        assert_eq!(out.model.encode(&m).unwrap().len(), 16);
    }
}
