use rand::Rng;

use super::{Head, Mlp, MlpCache, ModelError, PoolCache, Pooling, PoolingKind, Prediction};
use crate::data::{RelationType, Task};
use crate::embedding::Modality;
use crate::kernel::{sigmoid, softmax, Checkpoint, Matrix, ParamTensor, Scalar};
use crate::rng::{rng_for, tag};

pub const DEFAULT_D_EMB: usize = 768;
pub const DEFAULT_D_ATT: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub task: Task,
    pub modality: Modality,
    pub input_dim: usize,
    pub d_emb: usize,
    /// Hidden layers before the output layer, 1 to 4.
    pub hidden_layers: usize,
    /// Video only.
    pub pooling: Option<PoolingKind>,
    pub d_att: usize,
}

impl ModelConfig {
    pub fn new(task: Task, modality: Modality, input_dim: usize) -> Self {
        ModelConfig {
            task,
            modality,
            input_dim,
            d_emb: DEFAULT_D_EMB,
            hidden_layers: 1,
            pooling: (modality == Modality::Video).then_some(PoolingKind::Mean),
            d_att: DEFAULT_D_ATT,
        }
    }

    /// Affine+BN+ReLU blocks: the hidden layers plus the output layer.
    pub fn blocks(&self) -> usize {
        self.hidden_layers + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(1..=4).contains(&self.hidden_layers) {
            return Err(ModelError::Config(format!("hidden_layers must be 1..=4, got {}", self.hidden_layers)));
        }
        if self.input_dim == 0 || self.d_emb == 0 || self.d_att == 0 {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        match (self.modality, self.pooling) {
            (Modality::Label, Some(_)) => Err(ModelError::Config("label models take no pooling".into())),
            (Modality::Video, None) => Err(ModelError::Config("video models need a pooling kind".into())),
            _ => Ok(()),
        }
    }
}

/// One modality, one task.
///
/// Inputs are clip sets: a `K × input_dim` matrix per action. Label inputs are
/// sets with exactly one row and skip pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationModel<T> {
    pub config: ModelConfig,
    pub encoder: Mlp<T>,
    pub pooling: Option<Pooling<T>>,
    pub head: Head<T>,
}

/// State of a train-mode forward pass needed by [`RelationModel::backward`].
#[derive(Debug, Clone)]
pub struct TrainPass<T> {
    pub embeddings: Matrix<T>,
    offsets: Vec<usize>,
    flat: Matrix<T>,
    mlp: MlpCache<T>,
    pools: Vec<PoolCache<T>>,
    pairs: Vec<(usize, usize)>,
}

impl<T: Scalar> RelationModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = rng_for(seed, &[tag("init")]);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let encoder = Mlp::new(config.input_dim, config.d_emb, config.blocks(), rng);
        let pooling = config.pooling.map(|k| Pooling::new(k, config.d_emb, config.d_att, rng));
        let head = Head::new(config.task, config.d_emb, rng);
        Ok(RelationModel { config, encoder, pooling, head })
    }

    fn check_set(&self, set: &Matrix<T>) -> Result<(), ModelError> {
        if set.rows() == 0 {
            return Err(ModelError::EmptySet);
        }
        if set.cols() != self.config.input_dim {
            return Err(ModelError::Dim { expected: self.config.input_dim, got: set.cols() });
        }
        if self.pooling.is_none() && set.rows() != 1 {
            return Err(ModelError::Config(format!("label inputs have one vector, got {}", set.rows())));
        }
        Ok(())
    }

    /// Eval-mode embedding of one action.
    pub fn encode(&self, set: &Matrix<T>) -> Result<Vec<T>, ModelError> {
        self.check_set(set)?;
        let e = self.encoder.forward_eval(set)?;
        match &self.pooling {
            Some(p) => p.pool(&e),
            None => Ok(e.row(0).to_vec()),
        }
    }

    /// Eval-mode embeddings, one row per set.
    pub fn encode_all(&self, sets: &[Matrix<T>]) -> Result<Matrix<T>, ModelError> {
        let mut out = Matrix::zeros(sets.len(), self.config.d_emb);
        for (i, s) in sets.iter().enumerate() {
            out.row_mut(i).copy_from_slice(&self.encode(s)?);
        }
        Ok(out)
    }

    pub fn logits(&self, hi: &[T], hj: &[T]) -> Result<Vec<T>, ModelError> {
        self.head.logits(hi, hj)
    }

    pub fn predict_embedded(&self, hi: &[T], hj: &[T]) -> Result<Prediction, ModelError> {
        Ok(to_prediction(self.config.task, &self.logits(hi, hj)?))
    }

    /// Train-mode forward pass: every set goes through the encoder once, with
    /// batch normalization over all rows of all sets. Returns head logits per
    /// pair of set indices.
    pub fn forward_train(
        &mut self,
        sets: &[Matrix<T>],
        pairs: &[(usize, usize)],
    ) -> Result<(Vec<Vec<T>>, TrainPass<T>), ModelError> {
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        let mut data = Vec::new();
        offsets.push(0);
        for s in sets {
            self.check_set(s)?;
            data.extend_from_slice(s.data());
            offsets.push(offsets.last().unwrap() + s.rows());
        }
        let flat_in = Matrix::from_vec(*offsets.last().unwrap(), self.config.input_dim, data)?;
        let (flat, mlp) = self.encoder.forward_train(&flat_in)?;

        let d = self.config.d_emb;
        let mut embeddings = Matrix::zeros(sets.len(), d);
        let mut pools = Vec::new();
        for i in 0..sets.len() {
            match &self.pooling {
                Some(p) => {
                    let e = flat.select_rows(&(offsets[i]..offsets[i + 1]).collect::<Vec<_>>());
                    let (h, c) = p.pool_train(&e)?;
                    embeddings.row_mut(i).copy_from_slice(&h);
                    pools.push(c);
                }
                None => embeddings.row_mut(i).copy_from_slice(flat.row(offsets[i])),
            }
        }
        let logits = pairs
            .iter()
            .map(|&(a, b)| self.head.logits(embeddings.row(a), embeddings.row(b)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((logits, TrainPass { embeddings, offsets, flat, mlp, pools, pairs: pairs.to_vec() }))
    }

    /// Accumulates gradients of the loss whose logit gradients are `dlogits`.
    pub fn backward(&mut self, pass: &TrainPass<T>, dlogits: &[Vec<T>]) {
        let d = self.config.d_emb;
        let mut dh = Matrix::zeros(pass.embeddings.rows(), d);
        let mut gi = vec![T::zero(); d];
        let mut gj = vec![T::zero(); d];
        for (&(a, b), g) in pass.pairs.iter().zip(dlogits) {
            gi.iter_mut().chain(gj.iter_mut()).for_each(|v| *v = T::zero());
            self.head.backward(pass.embeddings.row(a), pass.embeddings.row(b), g, &mut gi, &mut gj);
            for (o, &v) in dh.row_mut(a).iter_mut().zip(&gi) {
                *o += v;
            }
            for (o, &v) in dh.row_mut(b).iter_mut().zip(&gj) {
                *o += v;
            }
        }
        let mut dflat = Matrix::zeros(pass.flat.rows(), d);
        match &mut self.pooling {
            Some(p) => {
                for i in 0..pass.embeddings.rows() {
                    let rows: Vec<usize> = (pass.offsets[i]..pass.offsets[i + 1]).collect();
                    let e = pass.flat.select_rows(&rows);
                    let de = p.backward(&e, &pass.pools[i], dh.row(i));
                    for (k, &r) in rows.iter().enumerate() {
                        dflat.row_mut(r).copy_from_slice(de.row(k));
                    }
                }
            }
            None => {
                for i in 0..pass.embeddings.rows() {
                    dflat.row_mut(pass.offsets[i]).copy_from_slice(dh.row(i));
                }
            }
        }
        self.encoder.backward(&pass.mlp, dflat);
    }

    /// Parameters in a fixed order: encoder, pooling, head.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = self.encoder.params_mut();
        if let Some(p) = &mut self.pooling {
            out.extend(p.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn flat_values(&mut self) -> Vec<T> {
        self.params_mut().iter().flat_map(|p| p.value.data().to_vec()).collect()
    }

    pub fn flat_grads(&mut self) -> Vec<T> {
        self.params_mut().iter().flat_map(|p| p.grad.data().to_vec()).collect()
    }

    pub fn set_flat_values(&mut self, values: &[T]) {
        let mut at = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        assert_eq!(at, values.len(), "flat parameter length");
    }

    fn encoder_prefix(&self) -> String {
        format!("{}_enc", self.config.modality.name())
    }

    fn head_prefix(&self) -> String {
        format!("head.{}.{}", self.config.task.name(), self.config.modality.name())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.encoder.save(&self.encoder_prefix(), &mut ck);
        if let Some(p) = &self.pooling {
            p.save(&mut ck);
        }
        self.head.save(&self.head_prefix(), &mut ck);
        ck
    }

    pub fn from_checkpoint(config: ModelConfig, ck: &Checkpoint) -> Result<Self, ModelError> {
        let mut m = Self::new(config, 0)?;
        let (ep, hp) = (m.encoder_prefix(), m.head_prefix());
        m.encoder.load(&ep, ck)?;
        if let Some(p) = &mut m.pooling {
            p.load(ck)?;
        }
        m.head.load(&hp, ck)?;
        Ok(m)
    }

    pub fn cast<U: Scalar>(&self) -> Result<RelationModel<U>, ModelError> {
        RelationModel::from_checkpoint(self.config.clone(), &self.to_checkpoint())
    }
}

/// Sigmoid for detection, softmax for classification.
pub fn to_prediction<T: Scalar>(task: Task, logits: &[T]) -> Prediction {
    match task {
        Task::Detection => Prediction::Det(sigmoid(logits[0]).f64()),
        Task::Classification => {
            let p = softmax(logits);
            let mut out = [0.0; RelationType::COUNT];
            for (o, v) in out.iter_mut().zip(p) {
                *o = v.f64();
            }
            Prediction::Cls(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pi;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_set(k: usize, d: usize, rng: &mut impl Rng) -> Matrix<f64> {
        Matrix::from_vec(k, d, (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn video_cfg(task: Task, pooling: PoolingKind) -> ModelConfig {
        ModelConfig { d_emb: 6, d_att: 4, pooling: Some(pooling), ..ModelConfig::new(task, Modality::Video, 5) }
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::new(Task::Detection, Modality::Label, 8);
        assert!(c.validate().is_ok());
        assert_eq!(c.blocks(), 2);
        c.hidden_layers = 5;
        assert!(c.validate().is_err());
        c.hidden_layers = 1;
        c.pooling = Some(PoolingKind::Max);
        assert!(c.validate().is_err());
        assert!(ModelConfig { pooling: None, ..video_cfg(Task::Detection, PoolingKind::Max) }.validate().is_err());
    }

    #[test]
    fn permutation_of_clips_leaves_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in PoolingKind::ALL {
            let m = RelationModel::<f64>::new(video_cfg(Task::Detection, kind), 3).unwrap();
            let set = random_set(5, 5, &mut rng);
            let h = m.encode(&set).unwrap();
            let rev = set.select_rows(&[4, 3, 2, 1, 0]);
            let hr = m.encode(&rev).unwrap();
            for (a, b) in h.iter().zip(&hr) {
                assert!((a - b).abs() < 1e-9, "{kind}");
            }
        }
    }

    #[test]
    fn single_clip_matches_mlp_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for kind in PoolingKind::ALL {
            let m = RelationModel::<f64>::new(video_cfg(Task::Detection, kind), 4).unwrap();
            let set = random_set(1, 5, &mut rng);
            assert_eq!(m.encode(&set).unwrap(), m.encoder.forward_eval(&set).unwrap().row(0).to_vec());
        }
    }

    #[test]
    fn train_forward_logits_match_direct_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut m = RelationModel::<f64>::new(video_cfg(Task::Classification, PoolingKind::Attention), 5).unwrap();
        let sets: Vec<_> = (0..4).map(|k| random_set(k + 1, 5, &mut rng)).collect();
        let pairs = [(0, 1), (1, 0), (2, 3)];
        let (logits, pass) = m.forward_train(&sets, &pairs).unwrap();
        assert_eq!(logits[1], pi(&logits[0]));
        let l = m.logits(pass.embeddings.row(2), pass.embeddings.row(3)).unwrap();
        assert_eq!(logits[2], l);
    }

    #[test]
    fn checkpoint_round_trip_and_names() {
        let m = RelationModel::<f32>::new(video_cfg(Task::Detection, PoolingKind::Attention), 6).unwrap();
        let ck = m.to_checkpoint();
        let names: Vec<&str> = ck.names().collect();
        assert!(names.contains(&"video_enc.l0.W"));
        assert!(names.contains(&"video_enc.l1.bn.running_var"));
        assert!(names.contains(&"pool.att.U"));
        assert!(names.contains(&"pool.att.V"));
        assert!(names.contains(&"head.det.video.W"));
        assert!(names.contains(&"head.det.video.b"));
        let back = RelationModel::<f32>::from_checkpoint(m.config.clone(), &ck).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn label_sets_need_one_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let cfg = ModelConfig { d_emb: 4, ..ModelConfig::new(Task::Detection, Modality::Label, 3) };
        let m = RelationModel::<f64>::new(cfg, 1).unwrap();
        assert!(m.encode(&random_set(2, 3, &mut rng)).is_err());
        assert!(m.encode(&random_set(1, 4, &mut rng)).is_err());
        assert!(m.encode(&random_set(1, 3, &mut rng)).is_ok());
    }
}
