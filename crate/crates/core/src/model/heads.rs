use rand::Rng;

use super::ModelError;
use crate::data::{RelationType, Task};
use crate::kernel::{glorot_uniform, Checkpoint, Matrix, ParamTensor, Scalar};

/// Swaps the subclass-of and superclass-of coordinates.
pub fn pi<T: Copy>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    out.swap(RelationType::SubclassOf.index(), RelationType::SuperclassOf.index());
    out
}

/// Linear map of a concatenated pair `[h_i; h_j]`, evaluated in both orders.
///
/// Detection logit: `μ(c_ij) + μ(c_ji)`. Classification logits:
/// `μ(c_ij) + π(μ(c_ji))`. Dot products run sequentially so that swapping the
/// pair reproduces the same floating-point result.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub task: Task,
    /// `2·d_emb × outputs`
    pub weight: ParamTensor<T>,
    /// `1 × outputs`
    pub bias: ParamTensor<T>,
}

impl<T: Scalar> Head<T> {
    pub fn outputs(task: Task) -> usize {
        match task {
            Task::Detection => 1,
            Task::Classification => RelationType::COUNT,
        }
    }

    pub fn new(task: Task, d_emb: usize, rng: &mut impl Rng) -> Self {
        let out = Self::outputs(task);
        Head { task, weight: ParamTensor::new(glorot_uniform(2 * d_emb, out, rng)), bias: ParamTensor::new(Matrix::zeros(1, out)) }
    }

    pub fn d_emb(&self) -> usize {
        self.weight.value.rows() / 2
    }

    fn mu(&self, hi: &[T], hj: &[T]) -> Vec<T> {
        let d = self.d_emb();
        let w = &self.weight.value;
        let out = w.cols();
        (0..out)
            .map(|o| {
                let mut s = self.bias.value.get(0, o);
                for k in 0..d {
                    s += w.get(k, o) * hi[k];
                }
                for k in 0..d {
                    s += w.get(d + k, o) * hj[k];
                }
                s
            })
            .collect()
    }

    pub fn logits(&self, hi: &[T], hj: &[T]) -> Result<Vec<T>, ModelError> {
        let d = self.d_emb();
        for h in [hi, hj] {
            if h.len() != d {
                return Err(ModelError::Dim { expected: d, got: h.len() });
            }
        }
        let (a, b) = (self.mu(hi, hj), self.mu(hj, hi));
        Ok(match self.task {
            Task::Detection => vec![a[0] + b[0]],
            Task::Classification => a.iter().zip(pi(&b)).map(|(&x, y)| x + y).collect(),
        })
    }

    /// Accumulates head gradients for upstream `dlogits` and adds the
    /// gradients for `h_i`, `h_j` into `dhi`, `dhj`.
    pub fn backward(&mut self, hi: &[T], hj: &[T], dlogits: &[T], dhi: &mut [T], dhj: &mut [T]) {
        let d = self.d_emb();
        // dμ(c_ij) = g and dμ(c_ji) = π(g)
        let g = dlogits.to_vec();
        let gp = match self.task {
            Task::Detection => g.clone(),
            Task::Classification => pi(&g),
        };
        let out = g.len();
        let w = &self.weight.value;
        let gw = &mut self.weight.grad;
        for o in 0..out {
            for k in 0..d {
                let (wa, wb) = (w.get(k, o), w.get(d + k, o));
                gw.set(k, o, gw.get(k, o) + g[o] * hi[k] + gp[o] * hj[k]);
                gw.set(d + k, o, gw.get(d + k, o) + g[o] * hj[k] + gp[o] * hi[k]);
                dhi[k] += wa * g[o] + wb * gp[o];
                dhj[k] += wb * g[o] + wa * gp[o];
            }
            let gb = self.bias.grad.get(0, o);
            self.bias.grad.set(0, o, gb + g[o] + gp[o]);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn save(&self, prefix: &str, ck: &mut Checkpoint) {
        ck.insert(format!("{prefix}.W"), &self.weight.value);
        ck.insert(format!("{prefix}.b"), &self.bias.value);
    }

    pub fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<(), ModelError> {
        self.weight = ParamTensor::new(ck.take(&format!("{prefix}.W"), self.weight.value.shape())?);
        self.bias = ParamTensor::new(ck.take(&format!("{prefix}.b"), self.bias.value.shape())?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{sigmoid, softmax};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head(task: Task, d: usize, seed: u64) -> Head<f64> {
        Head::new(task, d, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn pi_swaps_is_a_directions() {
        assert_eq!(pi(&[0.1, 0.2, 0.3, 0.4]), vec![0.1, 0.2, 0.4, 0.3]);
        assert_eq!(pi(&pi(&[1, 2, 3, 4])), vec![1, 2, 3, 4]);
    }

    #[test]
    fn zero_head_gives_half_and_uniform() {
        let mut h = head(Task::Detection, 3, 1);
        h.weight.value.fill(0.0);
        let z = h.logits(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 4.0]).unwrap();
        assert_eq!(sigmoid(z[0]), 0.5);
        let mut h = head(Task::Classification, 3, 1);
        h.weight.value.fill(0.0);
        let p = softmax(&h.logits(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 4.0]).unwrap());
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn hand_set_detection_logit() {
        // one-dimensional embeddings: μ(c_ij) = wa·hi + wb·hj + b
        let mut h = head(Task::Detection, 1, 2);
        h.weight.value = Matrix::from_rows(&[vec![0.2], vec![0.0]]).unwrap();
        h.bias.value = Matrix::row_vector(vec![0.1]);
        // μ(c_ij) = 0.2·1 + 0.1 = 0.3, μ(c_ji) = 0.2·2 + 0.1 = 0.5
        let z = h.logits(&[1.0], &[2.0]).unwrap()[0];
        assert!((sigmoid(z) - 0.689974).abs() < 1e-6);
    }

    #[test]
    fn hand_set_classification_logits() {
        // with h_i = 1, h_j = 0: μ(c_ij) is the first weight row, μ(c_ji) the second
        let mut h = head(Task::Classification, 1, 3);
        h.weight.value = Matrix::from_rows(&[vec![1.0, 0.0, 2.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]).unwrap();
        h.bias.value = Matrix::zeros(1, 4);
        let l = h.logits(&[1.0], &[0.0]).unwrap();
        assert_eq!(l, vec![1.0, 0.0, 3.0, 0.0]);
        let p = softmax(&l);
        let total = 1f64.exp() + 2.0 + 3f64.exp();
        let expected = [1f64.exp() / total, 1.0 / total, 3f64.exp() / total, 1.0 / total];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[2] - 0.8098).abs() < 1e-4);
    }

    #[test]
    fn symmetric_and_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let det = head(Task::Detection, 5, 5);
        let cls = head(Task::Classification, 5, 6);
        for _ in 0..50 {
            let hi: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let hj: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_eq!(det.logits(&hi, &hj).unwrap(), det.logits(&hj, &hi).unwrap());
            assert_eq!(cls.logits(&hj, &hi).unwrap(), pi(&cls.logits(&hi, &hj).unwrap()));
        }
    }

    #[test]
    fn dim_mismatch() {
        let h = head(Task::Detection, 3, 7);
        assert!(h.logits(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
