use super::{KernelError, ParamTensor, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update for every tensor. Fails without touching
/// anything if any gradient is non-finite.
pub fn adam_step<T: Scalar>(params: &mut [&mut ParamTensor<T>], cfg: &AdamConfig) -> Result<(), KernelError> {
    if params.iter().any(|p| !p.grad.is_finite()) {
        return Err(KernelError::Divergence("non-finite gradient".into()));
    }
    let (b1, b2, eps, lr) = (T::of(cfg.beta1), T::of(cfg.beta2), T::of(cfg.eps), T::of(cfg.lr));
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let ParamTensor { value, grad, adam_m, adam_v, .. } = &mut **p;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(adam_m.data_mut().iter_mut())
            .zip(adam_v.data_mut().iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
