/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central-difference check of `analytic` (the gradient of `f` at `theta`).
///
/// Per coordinate the error is `|a - n| / max(1e-8, |a| + |n|)`; the maximum
/// is reported along with where it occurred.
pub fn grad_check<F>(mut f: F, theta: &[f64], analytic: &[f64], eps: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len(), "one analytic entry per coordinate");
    let mut work = theta.to_vec();
    let mut worst = GradCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for i in 0..theta.len() {
        work[i] = theta[i] + eps;
        let up = f(&work);
        work[i] = theta[i] - eps;
        let down = f(&work);
        work[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > worst.max_rel_error || i == 0 {
            worst = GradCheck { max_rel_error: rel, worst_index: i, analytic: a, numeric };
        }
    }
    worst
}
