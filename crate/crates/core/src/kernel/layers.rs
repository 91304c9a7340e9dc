//! Layers as explicit forward/backward pairs.
//!
//! Forward passes that need state for the backward pass return a cache; the
//! caller owns it and hands it back. Backward passes accumulate into
//! `ParamTensor::grad` and return the gradient with respect to the input.

use rand::Rng;

use super::matrix::gemm;
use super::{KernelError, Matrix, Scalar};

/// Trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    pub adam_m: Matrix<T>,
    pub adam_v: Matrix<T>,
    pub step_count: u64,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        ParamTensor { value, grad: Matrix::zeros(r, c), adam_m: Matrix::zeros(r, c), adam_v: Matrix::zeros(r, c), step_count: 0 }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Scalar>(&self) -> ParamTensor<U> {
        ParamTensor {
            value: self.value.cast(),
            grad: self.grad.cast(),
            adam_m: self.adam_m.cast(),
            adam_v: self.adam_v.cast(),
            step_count: self.step_count,
        }
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::of(rng.random_range(-bound..bound))).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

/// `y = x·W + b`, with `b` broadcast over rows.
pub fn affine_forward<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: Option<&Matrix<T>>) -> Result<Matrix<T>, KernelError> {
    if x.cols() != w.rows() {
        return Err(KernelError::Shape { op: "affine", left: x.shape(), right: w.shape() });
    }
    let mut y = Matrix::zeros(x.rows(), w.cols());
    if let Some(b) = b {
        if b.shape() != (1, w.cols()) {
            return Err(KernelError::Shape { op: "affine bias", left: w.shape(), right: b.shape() });
        }
        for r in 0..y.rows() {
            y.row_mut(r).copy_from_slice(b.row(0));
        }
        gemm(T::one(), x, false, w, false, T::one(), &mut y);
    } else {
        gemm(T::one(), x, false, w, false, T::zero(), &mut y);
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub weight: ParamTensor<T>,
    pub bias: Option<ParamTensor<T>>,
}

impl<T: Scalar> Affine<T> {
    pub fn new(d_in: usize, d_out: usize, with_bias: bool, rng: &mut impl Rng) -> Self {
        Affine {
            weight: ParamTensor::new(glorot_uniform(d_in, d_out, rng)),
            bias: with_bias.then(|| ParamTensor::new(Matrix::zeros(1, d_out))),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>, KernelError> {
        affine_forward(x, &self.weight.value, self.bias.as_ref().map(|b| &b.value))
    }

    /// Accumulates `dW += xᵀ·dy`, `db += Σ dy`; returns `dy·Wᵀ` when asked.
    pub fn backward(&mut self, x: &Matrix<T>, dy: &Matrix<T>, need_input_grad: bool) -> Option<Matrix<T>> {
        gemm(T::one(), x, true, dy, false, T::one(), &mut self.weight.grad);
        if let Some(b) = &mut self.bias {
            b.grad.add_assign(&dy.col_sums());
        }
        need_input_grad.then(|| {
            let mut dx = Matrix::zeros(dy.rows(), self.d_in());
            gemm(T::one(), dy, false, &self.weight.value, true, T::zero(), &mut dx);
            dx
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        out
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization.
///
/// Train mode normalizes with the batch mean and biased variance; running
/// statistics move by `momentum` towards the batch mean and the unbiased
/// batch variance. Eval mode uses running statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: ParamTensor<T>,
    pub beta: ParamTensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Matrix<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(d: usize) -> Self {
        BatchNorm {
            gamma: ParamTensor::new(Matrix::filled(1, d, T::one())),
            beta: ParamTensor::new(Matrix::zeros(1, d)),
            running_mean: vec![T::zero(); d],
            running_var: vec![T::one(); d],
            momentum: T::of(BN_MOMENTUM),
            epsilon: T::of(BN_EPSILON),
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward_train(&mut self, x: &Matrix<T>) -> Result<(Matrix<T>, BatchNormCache<T>), KernelError> {
        let (n, d) = x.shape();
        if d != self.dim() {
            return Err(KernelError::Shape { op: "batchnorm", left: x.shape(), right: (1, self.dim()) });
        }
        if n < 2 {
            return Err(KernelError::BatchSize { needed: 2, got: n });
        }
        let nf = T::of(n as f64);
        let mean = x.col_sums().into_data().into_iter().map(|s| s / nf).collect::<Vec<_>>();
        let mut var = vec![T::zero(); d];
        for r in 0..n {
            for ((v, &xv), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let c = xv - m;
                *v += c * c;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / nf);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + self.epsilon).sqrt().recip()).collect();

        let mut x_hat = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        let (g, b) = (self.gamma.value.row(0), self.beta.value.row(0));
        for r in 0..n {
            let xr = x.row(r);
            let hr = x_hat.row_mut(r);
            for j in 0..d {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let yr = y.row_mut(r);
            let hr = x_hat.row(r);
            for j in 0..d {
                yr[j] = g[j] * hr[j] + b[j];
            }
        }

        let unbias = nf / (nf - T::one());
        let keep = T::one() - self.momentum;
        for j in 0..d {
            self.running_mean[j] = keep * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] = keep * self.running_var[j] + self.momentum * var[j] * unbias;
        }
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    pub fn forward_eval(&self, x: &Matrix<T>) -> Result<Matrix<T>, KernelError> {
        let (n, d) = x.shape();
        if d != self.dim() {
            return Err(KernelError::Shape { op: "batchnorm", left: x.shape(), right: (1, self.dim()) });
        }
        let scale: Vec<T> = (0..d)
            .map(|j| self.gamma.value.get(0, j) / (self.running_var[j] + self.epsilon).sqrt())
            .collect();
        let mut y = Matrix::zeros(n, d);
        for r in 0..n {
            let (xr, yr) = (x.row(r), y.row_mut(r));
            for j in 0..d {
                yr[j] = (xr[j] - self.running_mean[j]) * scale[j] + self.beta.value.get(0, j);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Matrix<T>) -> Matrix<T> {
        let (n, d) = dy.shape();
        let nf = T::of(n as f64);
        let mut sum_dxhat = vec![T::zero(); d];
        let mut sum_dxhat_xhat = vec![T::zero(); d];
        {
            let g = self.gamma.value.row(0);
            let gg = self.gamma.grad.row_mut(0);
            for r in 0..n {
                let (dr, hr) = (dy.row(r), cache.x_hat.row(r));
                for j in 0..d {
                    gg[j] += dr[j] * hr[j];
                    let dxh = dr[j] * g[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * hr[j];
                }
            }
        }
        self.beta.grad.add_assign(&dy.col_sums());
        let g = self.gamma.value.row(0);
        let mut dx = Matrix::zeros(n, d);
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.x_hat.row(r));
            let out = dx.row_mut(r);
            for j in 0..d {
                let dxh = dr[j] * g[j];
                out[j] = cache.inv_std[j] / nf * (nf * dxh - sum_dxhat[j] - hr[j] * sum_dxhat_xhat[j]);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given the ReLU *output*.
pub fn relu_backward<T: Scalar>(y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let data = y.data().iter().zip(dy.data()).map(|(&o, &g)| if o > T::zero() { g } else { T::zero() }).collect();
    Matrix::from_vec(dy.rows(), dy.cols(), data).expect("same shape")
}

pub fn tanh<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| v.tanh())
}

/// Gradient through tanh given the tanh *output*.
pub fn tanh_backward<T: Scalar>(y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let data = y.data().iter().zip(dy.data()).map(|(&t, &g)| g * (T::one() - t * t)).collect();
    Matrix::from_vec(dy.rows(), dy.cols(), data).expect("same shape")
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of a softmax row given its output `p` and upstream `dp`.
pub fn softmax_backward<T: Scalar>(p: &[T], dp: &[T]) -> Vec<T> {
    let dot: T = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
    p.iter().zip(dp).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}
