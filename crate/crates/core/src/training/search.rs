use std::fmt;

use rayon::prelude::*;

use super::{train, Inputs, TrainConfig, TrainError, TrainOutcome};
use crate::data::TaskSplit;
use crate::embedding::Modality;
use crate::model::PoolingKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub pooling: Option<PoolingKind>,
    pub hidden_layers: usize,
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pooling {
            Some(p) => write!(f, "{p}/{}", self.hidden_layers),
            None => write!(f, "{}", self.hidden_layers),
        }
    }
}

/// Enumeration order: pooling max < mean < attention, then depth 1..4.
pub fn grid_for(modality: Modality) -> Vec<GridPoint> {
    match modality {
        Modality::Label => (1..=4).map(|d| GridPoint { pooling: None, hidden_layers: d }).collect(),
        Modality::Video => PoolingKind::ALL
            .iter()
            .flat_map(|&p| (1..=4).map(move |d| GridPoint { pooling: Some(p), hidden_layers: d }))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub point: GridPoint,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub error: Option<String>,
    pub selected: bool,
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub point: GridPoint,
    pub config: TrainConfig,
    pub outcome: TrainOutcome,
    pub grid: Vec<GridRow>,
}

/// Per-point adjustment applied after the grid point itself.
pub type ConfigOverride<'a> = &'a (dyn Fn(&GridPoint, &mut TrainConfig) + Sync);

/// Trains every grid point (in parallel when the pool has threads) and keeps
/// the lowest validation loss; ties go to the earlier point. Failed points are
/// reported in the grid rows; the search fails only if every point does.
pub fn hyperparameter_search(
    base: &TrainConfig,
    split: &TaskSplit,
    inputs: &Inputs,
    grid: &[GridPoint],
    adjust: Option<ConfigOverride>,
) -> Result<SearchOutcome, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::InvalidArgument("empty grid".into()));
    }
    let configs: Vec<TrainConfig> = grid
        .iter()
        .map(|p| {
            let mut c = base.clone();
            c.pooling = p.pooling;
            c.hidden_layers = p.hidden_layers;
            if let Some(f) = adjust {
                f(p, &mut c);
            }
            c
        })
        .collect();
    let results: Vec<Result<TrainOutcome, TrainError>> =
        configs.par_iter().map(|c| train(c, split, inputs, None)).collect();

    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok(o) = r {
            if best.is_none_or(|b| o.best_val_loss < results[b].as_ref().unwrap().best_val_loss) {
                best = Some(i);
            }
        }
    }
    let grid_rows: Vec<GridRow> = results
        .iter()
        .enumerate()
        .map(|(i, r)| GridRow {
            point: grid[i],
            best_epoch: r.as_ref().ok().map(|o| o.best_epoch),
            best_val_loss: r.as_ref().ok().map(|o| o.best_val_loss),
            error: r.as_ref().err().map(|e| e.to_string()),
            selected: best == Some(i),
        })
        .collect();
    let Some(b) = best else {
        let (i, err) = results.into_iter().enumerate().find_map(|(i, r)| r.err().map(|e| (i, e))).expect("all failed");
        return Err(TrainError::Grid { point: grid[i].to_string(), source: Box::new(err) });
    };
    let outcome = results.into_iter().nth(b).unwrap().unwrap();
    Ok(SearchOutcome { point: grid[b], config: configs[b].clone(), outcome, grid: grid_rows })
}
