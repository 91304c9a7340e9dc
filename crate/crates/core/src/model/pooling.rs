use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::ModelError;
use crate::kernel::{gemm, glorot_uniform, softmax, softmax_backward, tanh, Checkpoint, Matrix, ParamTensor, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolingKind {
    Max,
    Mean,
    Attention,
}

impl PoolingKind {
    /// Grid enumeration order.
    pub const ALL: [PoolingKind; 3] = [PoolingKind::Max, PoolingKind::Mean, PoolingKind::Attention];

    pub fn name(self) -> &'static str {
        match self {
            PoolingKind::Max => "max",
            PoolingKind::Mean => "mean",
            PoolingKind::Attention => "attention",
        }
    }
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(PoolingKind::Max),
            "mean" => Ok(PoolingKind::Mean),
            "attention" | "att" => Ok(PoolingKind::Attention),
            other => Err(format!("unknown pooling `{other}` (expected max, mean or attention)")),
        }
    }
}

/// Scores `s_k = U·tanh(V·e_k)`, weights `softmax(s)`, output `Σ a_k e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPool<T> {
    /// `1 × d_att`
    pub u: ParamTensor<T>,
    /// `d_att × d_emb`
    pub v: ParamTensor<T>,
}

impl<T: Scalar> AttentionPool<T> {
    pub fn new(d_emb: usize, d_att: usize, rng: &mut impl Rng) -> Self {
        AttentionPool { u: ParamTensor::new(glorot_uniform(1, d_att, rng)), v: ParamTensor::new(glorot_uniform(d_att, d_emb, rng)) }
    }

    pub fn d_att(&self) -> usize {
        self.u.value.cols()
    }

    /// Hidden activations `tanh(E·Vᵀ)` and the softmax weights.
    fn weights(&self, e: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
        let mut pre = Matrix::zeros(e.rows(), self.d_att());
        gemm(T::one(), e, false, &self.v.value, true, T::zero(), &mut pre);
        let t = tanh(&pre);
        let u = self.u.value.row(0);
        let scores: Vec<T> = (0..t.rows()).map(|k| t.row(k).iter().zip(u).map(|(&a, &b)| a * b).sum()).collect();
        (t, softmax(&scores))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pooling<T> {
    Max,
    Mean,
    Attention(AttentionPool<T>),
}

#[derive(Debug, Clone)]
pub enum PoolCache<T> {
    Max(Vec<usize>),
    Mean,
    Attention { hidden: Matrix<T>, weights: Vec<T> },
}

impl<T: Scalar> Pooling<T> {
    pub fn new(kind: PoolingKind, d_emb: usize, d_att: usize, rng: &mut impl Rng) -> Self {
        match kind {
            PoolingKind::Max => Pooling::Max,
            PoolingKind::Mean => Pooling::Mean,
            PoolingKind::Attention => Pooling::Attention(AttentionPool::new(d_emb, d_att, rng)),
        }
    }

    pub fn kind(&self) -> PoolingKind {
        match self {
            Pooling::Max => PoolingKind::Max,
            Pooling::Mean => PoolingKind::Mean,
            Pooling::Attention(_) => PoolingKind::Attention,
        }
    }

    /// Attention weights for a set, if this is attention pooling.
    pub fn attention_weights(&self, e: &Matrix<T>) -> Option<Vec<T>> {
        match self {
            Pooling::Attention(att) if e.rows() > 0 => Some(att.weights(e).1),
            _ => None,
        }
    }

    pub fn pool(&self, e: &Matrix<T>) -> Result<Vec<T>, ModelError> {
        Ok(self.pool_train(e)?.0)
    }

    pub fn pool_train(&self, e: &Matrix<T>) -> Result<(Vec<T>, PoolCache<T>), ModelError> {
        let (k, d) = e.shape();
        if k == 0 {
            return Err(ModelError::EmptySet);
        }
        if let Pooling::Attention(att) = self {
            if d != att.v.value.cols() {
                return Err(ModelError::Dim { expected: att.v.value.cols(), got: d });
            }
        }
        Ok(match self {
            Pooling::Max => {
                let mut arg = vec![0usize; d];
                let mut out = e.row(0).to_vec();
                for r in 1..k {
                    for (j, &v) in e.row(r).iter().enumerate() {
                        if v > out[j] {
                            out[j] = v;
                            arg[j] = r;
                        }
                    }
                }
                (out, PoolCache::Max(arg))
            }
            Pooling::Mean => {
                let kf = T::of(k as f64);
                (e.col_sums().into_data().into_iter().map(|s| s / kf).collect(), PoolCache::Mean)
            }
            Pooling::Attention(att) => {
                let (hidden, weights) = att.weights(e);
                let mut out = vec![T::zero(); d];
                for (r, &a) in weights.iter().enumerate() {
                    for (o, &v) in out.iter_mut().zip(e.row(r)) {
                        *o += a * v;
                    }
                }
                (out, PoolCache::Attention { hidden, weights })
            }
        })
    }

    /// Gradient with respect to the set rows; accumulates `U`, `V` gradients.
    pub fn backward(&mut self, e: &Matrix<T>, cache: &PoolCache<T>, dout: &[T]) -> Matrix<T> {
        let (k, d) = e.shape();
        let mut de = Matrix::zeros(k, d);
        match (self, cache) {
            (Pooling::Max, PoolCache::Max(arg)) => {
                for (j, &r) in arg.iter().enumerate() {
                    de.set(r, j, dout[j]);
                }
            }
            (Pooling::Mean, PoolCache::Mean) => {
                let kf = T::of(k as f64);
                for r in 0..k {
                    for (o, &g) in de.row_mut(r).iter_mut().zip(dout) {
                        *o = g / kf;
                    }
                }
            }
            (Pooling::Attention(att), PoolCache::Attention { hidden, weights }) => {
                let da: Vec<T> = (0..k).map(|r| e.row(r).iter().zip(dout).map(|(&x, &g)| x * g).sum()).collect();
                let ds = softmax_backward(weights, &da);
                let d_att = att.d_att();
                let u = att.u.value.row(0).to_vec();
                let mut dpre = Matrix::zeros(k, d_att);
                {
                    let gu = att.u.grad.row_mut(0);
                    for r in 0..k {
                        let h = hidden.row(r);
                        let out = dpre.row_mut(r);
                        for c in 0..d_att {
                            gu[c] += ds[r] * h[c];
                            out[c] = ds[r] * u[c] * (T::one() - h[c] * h[c]);
                        }
                    }
                }
                gemm(T::one(), &dpre, true, e, false, T::one(), &mut att.v.grad);
                gemm(T::one(), &dpre, false, &att.v.value, false, T::zero(), &mut de);
                for r in 0..k {
                    for (o, &g) in de.row_mut(r).iter_mut().zip(dout) {
                        *o += weights[r] * g;
                    }
                }
            }
            _ => unreachable!("pool cache from a different pooling kind"),
        }
        de
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        match self {
            Pooling::Attention(att) => vec![&mut att.u, &mut att.v],
            _ => vec![],
        }
    }

    pub fn save(&self, ck: &mut Checkpoint) {
        if let Pooling::Attention(att) = self {
            ck.insert("pool.att.U", &att.u.value);
            ck.insert("pool.att.V", &att.v.value);
        }
    }

    pub fn load(&mut self, ck: &Checkpoint) -> Result<(), ModelError> {
        if let Pooling::Attention(att) = self {
            att.u = ParamTensor::new(ck.take("pool.att.U", att.u.value.shape())?);
            att.v = ParamTensor::new(ck.take("pool.att.V", att.v.value.shape())?);
        }
        Ok(())
    }
}
