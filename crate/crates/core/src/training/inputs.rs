use super::TrainError;
use crate::data::{ActionIdx, Catalog};
use crate::embedding::{EmbeddingStore, Modality};
use crate::kernel::{Matrix, Scalar};

/// Catalog plus the embedding store of one modality.
#[derive(Debug, Clone, Copy)]
pub struct Inputs<'a> {
    pub catalog: &'a Catalog,
    pub store: &'a EmbeddingStore,
}

impl<'a> Inputs<'a> {
    pub fn new(catalog: &'a Catalog, store: &'a EmbeddingStore) -> Self {
        Inputs { catalog, store }
    }

    pub fn modality(&self) -> Modality {
        self.store.modality()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    /// Input set for one action: its label vector, or up to `k` clips drawn
    /// with `seed`.
    pub fn set<T: Scalar>(&self, idx: ActionIdx, k: usize, seed: u64) -> Result<Matrix<T>, TrainError> {
        let key = self.catalog.key(idx);
        let rows: Vec<Vec<f32>> = match self.modality() {
            Modality::Label => vec![self.store.vector(key)?.to_vec()],
            Modality::Video => self.store.sample_videos(key, k, seed)?.vectors,
        };
        let data = rows.iter().flatten().map(|&v| T::of(v as f64)).collect();
        Ok(Matrix::from_vec(rows.len(), self.dim(), data)?)
    }

    /// Actions among `idx` that have no embedding.
    pub fn missing(&self, idx: impl IntoIterator<Item = ActionIdx>) -> Vec<ActionIdx> {
        idx.into_iter().filter(|&i| !self.store.contains(self.catalog.key(i))).collect()
    }
}
