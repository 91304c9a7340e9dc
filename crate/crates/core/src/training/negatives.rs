use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use super::TrainError;
use crate::data::{ActionIdx, TaskSplit};

/// Uniform sampler over ordered source-internal pairs `(i, j)`, `i ≠ j`,
/// that are not labeled positives in either orientation.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    source: Vec<ActionIdx>,
    positives: HashSet<(ActionIdx, ActionIdx)>,
}

impl NegativeSampler {
    pub fn new(split: &TaskSplit) -> Self {
        let members: HashSet<ActionIdx> = split.source_actions.iter().copied().collect();
        let positives = split.positive_set().into_iter().filter(|(a, b)| members.contains(a) && members.contains(b)).collect();
        NegativeSampler { source: split.source_actions.clone(), positives }
    }

    pub fn complement_size(&self) -> usize {
        let n = self.source.len();
        (n * n.saturating_sub(1)).saturating_sub(self.positives.len())
    }

    pub fn is_positive(&self, pair: (ActionIdx, ActionIdx)) -> bool {
        self.positives.contains(&pair)
    }

    /// `n` distinct negatives, in draw order.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<(ActionIdx, ActionIdx)>, TrainError> {
        let available = self.complement_size();
        if n > available {
            return Err(TrainError::InvalidArgument(format!("{n} negatives requested, only {available} unrelated pairs")));
        }
        if n == 0 {
            return Ok(vec![]);
        }
        let m = self.source.len();
        if 2 * n > available {
            let all: Vec<(ActionIdx, ActionIdx)> = self
                .source
                .iter()
                .flat_map(|&a| self.source.iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| a != b && !self.positives.contains(&(a, b)))
                .collect();
            return Ok(index::sample(rng, all.len(), n).into_iter().map(|i| all[i]).collect());
        }
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let a = self.source[rng.random_range(0..m)];
            let b = self.source[rng.random_range(0..m)];
            if a != b && !self.positives.contains(&(a, b)) && seen.insert((a, b)) {
                out.push((a, b));
            }
        }
        Ok(out)
    }
}

pub fn complement_size(split: &TaskSplit) -> usize {
    NegativeSampler::new(split).complement_size()
}

pub fn sample_negatives(split: &TaskSplit, n_neg: usize, seed: u64) -> Result<Vec<(ActionIdx, ActionIdx)>, TrainError> {
    let mut rng = crate::rng::rng_for(seed, &[crate::rng::tag("negatives")]);
    NegativeSampler::new(split).sample(n_neg, &mut rng)
}
