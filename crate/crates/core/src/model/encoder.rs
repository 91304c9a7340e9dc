use rand::Rng;

use super::ModelError;
use crate::kernel::{relu, relu_backward, Affine, BatchNorm, BatchNormCache, Checkpoint, Matrix, ParamTensor, Scalar};

/// Affine map followed by batch normalization and ReLU. The affine part has
/// no bias: batch normalization subtracts it again.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub affine: Affine<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub blocks: Vec<Block<T>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    inputs: Vec<Matrix<T>>,
    bn: Vec<BatchNormCache<T>>,
    outputs: Vec<Matrix<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(input_dim: usize, width: usize, n_blocks: usize, rng: &mut impl Rng) -> Self {
        let blocks = (0..n_blocks)
            .map(|i| Block {
                affine: Affine::new(if i == 0 { input_dim } else { width }, width, false, rng),
                bn: BatchNorm::new(width),
            })
            .collect();
        Mlp { blocks }
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].affine.d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.affine.d_out())
    }

    fn check(&self, x: &Matrix<T>) -> Result<(), ModelError> {
        if x.cols() != self.input_dim() {
            return Err(ModelError::Dim { expected: self.input_dim(), got: x.cols() });
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Matrix<T>) -> Result<Matrix<T>, ModelError> {
        self.check(x)?;
        let mut h = x.clone();
        for b in &self.blocks {
            h = relu(&b.bn.forward_eval(&b.affine.forward(&h)?)?);
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Matrix<T>) -> Result<(Matrix<T>, MlpCache<T>), ModelError> {
        self.check(x)?;
        let mut cache = MlpCache { inputs: vec![], bn: vec![], outputs: vec![] };
        let mut h = x.clone();
        for b in &mut self.blocks {
            let a = b.affine.forward(&h)?;
            let (n, c) = b.bn.forward_train(&a)?;
            cache.inputs.push(h);
            cache.bn.push(c);
            h = relu(&n);
            cache.outputs.push(h.clone());
        }
        Ok((h, cache))
    }

    /// Accumulates parameter gradients; the input gradient is not needed.
    pub fn backward(&mut self, cache: &MlpCache<T>, dy: Matrix<T>) {
        let mut d = dy;
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            let dn = relu_backward(&cache.outputs[i], &d);
            let da = b.bn.backward(&cache.bn[i], &dn);
            match b.affine.backward(&cache.inputs[i], &da, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.affine.params_mut());
            out.extend(b.bn.params_mut());
        }
        out
    }

    pub fn save(&self, prefix: &str, ck: &mut Checkpoint) {
        for (i, b) in self.blocks.iter().enumerate() {
            ck.insert(format!("{prefix}.l{i}.W"), &b.affine.weight.value);
            ck.insert(format!("{prefix}.l{i}.bn.gamma"), &b.bn.gamma.value);
            ck.insert(format!("{prefix}.l{i}.bn.beta"), &b.bn.beta.value);
            ck.insert_vec(format!("{prefix}.l{i}.bn.running_mean"), &b.bn.running_mean);
            ck.insert_vec(format!("{prefix}.l{i}.bn.running_var"), &b.bn.running_var);
        }
    }

    pub fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<(), ModelError> {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let d = b.bn.dim();
            b.affine.weight = ParamTensor::new(ck.take(&format!("{prefix}.l{i}.W"), b.affine.weight.value.shape())?);
            b.bn.gamma = ParamTensor::new(ck.take(&format!("{prefix}.l{i}.bn.gamma"), (1, d))?);
            b.bn.beta = ParamTensor::new(ck.take(&format!("{prefix}.l{i}.bn.beta"), (1, d))?);
            b.bn.running_mean = ck.take_vec(&format!("{prefix}.l{i}.bn.running_mean"), d)?;
            b.bn.running_var = ck.take_vec(&format!("{prefix}.l{i}.bn.running_var"), d)?;
        }
        Ok(())
    }
}
