//! Embedding stores and the `AEMB` file format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "AEMB" | version u32 = 1 | modality u8 (0 label, 1 video) | dim u32 | record_count u64
//! per record: key_len u16 | key bytes (UTF-8 "dataset/action") | clip_count u32 | clip_count*dim f32
//! ```
//!
//! Label stores hold exactly one vector per action; video stores hold one or
//! more clip vectors per action.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::index;

use crate::data::ActionKey;
use crate::rng::rng_for;

pub const MAGIC: &[u8; 4] = b"AEMB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Label,
    Video,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Label => "label",
            Modality::Video => "video",
        }
    }

    fn code(self) -> u8 {
        match self {
            Modality::Label => 0,
            Modality::Video => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" => Ok(Modality::Label),
            "video" => Ok(Modality::Video),
            _ => Err(EmbeddingError::Invalid(format!("unknown modality `{s}`"))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("offset {offset}: bad magic {found:?}, expected \"AEMB\"")]
    BadMagic { offset: usize, found: [u8; 4] },
    #[error("offset {offset}: unsupported version {found}")]
    Version { offset: usize, found: u32 },
    #[error("offset {offset}: truncated payload, expected {expected} bytes but file has {actual}")]
    Truncated { offset: usize, expected: usize, actual: usize },
    #[error("offset {offset}: non-finite value in payload")]
    NonFinite { offset: usize },
    #[error("offset {offset}: malformed data: {message}")]
    Malformed { offset: usize, message: String },
    #[error("invalid store: {0}")]
    Invalid(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// All vectors of one action, flattened clip-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    values: Vec<f32>,
    clips: usize,
}

impl Record {
    pub fn clip_count(&self) -> usize {
        self.clips
    }

    pub fn clip(&self, i: usize) -> &[f32] {
        let dim = self.values.len() / self.clips;
        &self.values[i * dim..(i + 1) * dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Keyed map from action to its vectors. Record order follows insertion (or
/// file) order; lookups go by key.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    modality: Modality,
    dim: usize,
    records: IndexMap<ActionKey, Record>,
}

/// Clip vectors drawn for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub action: ActionKey,
    pub vectors: Vec<Vec<f32>>,
    pub requested: usize,
}

impl EmbeddingStore {
    pub fn new(modality: Modality, dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(EmbeddingError::Invalid(format!("dimension {dim} out of range")));
        }
        Ok(EmbeddingStore { modality, dim, records: IndexMap::new() })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ActionKey> {
        self.records.keys()
    }

    pub fn contains(&self, key: &ActionKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn get(&self, key: &ActionKey) -> Option<&Record> {
        self.records.get(key)
    }

    pub fn record(&self, key: &ActionKey) -> Result<&Record, EmbeddingError> {
        self.records.get(key).ok_or_else(|| EmbeddingError::UnknownAction(key.to_string()))
    }

    /// The single vector of a label-store record.
    pub fn vector(&self, key: &ActionKey) -> Result<&[f32], EmbeddingError> {
        Ok(self.record(key)?.clip(0))
    }

    /// Adds (or replaces) one action's vectors after validating them.
    pub fn insert(&mut self, key: ActionKey, clips: Vec<Vec<f32>>) -> Result<(), EmbeddingError> {
        if clips.is_empty() {
            return Err(EmbeddingError::Invalid(format!("`{key}` has no vectors")));
        }
        if self.modality == Modality::Label && clips.len() != 1 {
            return Err(EmbeddingError::Invalid(format!("label record `{key}` must hold exactly one vector, got {}", clips.len())));
        }
        let key_len = key.to_string().len();
        if key_len > u16::MAX as usize {
            return Err(EmbeddingError::Invalid(format!("key of {key_len} bytes is too long")));
        }
        let mut values = Vec::with_capacity(clips.len() * self.dim);
        for c in &clips {
            if c.len() != self.dim {
                return Err(EmbeddingError::Invalid(format!("`{key}`: vector of dim {} in a dim-{} store", c.len(), self.dim)));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::Invalid(format!("`{key}`: non-finite entry")));
            }
            values.extend_from_slice(c);
        }
        self.records.insert(key, Record { values, clips: clips.len() });
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.records.iter().map(|(k, r)| 2 + k.to_string().len() + 4 + r.values.len() * 4).sum();
        let mut buf = Vec::with_capacity(HEADER_LEN + payload);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.modality.code());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for (key, rec) in &self.records {
            let k = key.to_string();
            buf.extend_from_slice(&(k.len() as u16).to_le_bytes());
            buf.extend_from_slice(k.as_bytes());
            buf.extend_from_slice(&(rec.clips as u32).to_le_bytes());
            for v in &rec.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(EmbeddingError::BadMagic { offset: 0, found: magic.try_into().expect("4 bytes") });
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(EmbeddingError::Version { offset: 4, found: version });
        }
        let modality = match cur.u8()? {
            0 => Modality::Label,
            1 => Modality::Video,
            m => return Err(EmbeddingError::Malformed { offset: 8, message: format!("modality code {m}") }),
        };
        let dim = cur.u32()? as usize;
        if dim == 0 {
            return Err(EmbeddingError::Malformed { offset: 9, message: "dimension is zero".into() });
        }
        let count = cur.u64()?;
        let mut store = EmbeddingStore { modality, dim, records: IndexMap::new() };
        for _ in 0..count {
            let record_start = cur.pos;
            let key_len = cur.u16()? as usize;
            let key_bytes = cur.take(key_len)?;
            let key_str = std::str::from_utf8(key_bytes)
                .map_err(|_| EmbeddingError::Malformed { offset: record_start + 2, message: "key is not UTF-8".into() })?;
            let key: ActionKey = key_str
                .parse()
                .map_err(|_| EmbeddingError::Malformed { offset: record_start + 2, message: format!("bad key {key_str:?}") })?;
            let clips_at = cur.pos;
            let clips = cur.u32()? as usize;
            if clips == 0 {
                return Err(EmbeddingError::Malformed { offset: clips_at, message: format!("`{key}` has zero vectors") });
            }
            if modality == Modality::Label && clips != 1 {
                return Err(EmbeddingError::Malformed { offset: clips_at, message: format!("label record `{key}` has {clips} vectors") });
            }
            let payload_at = cur.pos;
            let raw = cur.take(clips * dim * 4)?;
            let mut values = Vec::with_capacity(clips * dim);
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                if !v.is_finite() {
                    return Err(EmbeddingError::NonFinite { offset: payload_at + 4 * i });
                }
                values.push(v);
            }
            if store.records.insert(key.clone(), Record { values, clips }).is_some() {
                return Err(EmbeddingError::Malformed { offset: record_start, message: format!("duplicate key `{key}`") });
            }
        }
        if cur.pos != bytes.len() {
            return Err(EmbeddingError::Malformed { offset: cur.pos, message: format!("{} trailing bytes", bytes.len() - cur.pos) });
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbeddingError> {
        let io = |source| EmbeddingError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, EmbeddingError> {
        let bytes = std::fs::read(path).map_err(|source| EmbeddingError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }

    /// Draws `min(k, clips)` clips without replacement. Deterministic for a
    /// fixed seed; clip indices come back in ascending order.
    pub fn sample_videos(&self, key: &ActionKey, k: usize, seed: u64) -> Result<VideoSample, EmbeddingError> {
        let idx = self.sample_indices(key, k, seed)?;
        let rec = self.record(key)?;
        Ok(VideoSample {
            action: key.clone(),
            vectors: idx.into_iter().map(|i| rec.clip(i).to_vec()).collect(),
            requested: k,
        })
    }

    /// Clip indices `sample_videos` would pick.
    pub fn sample_indices(&self, key: &ActionKey, k: usize, seed: u64) -> Result<Vec<usize>, EmbeddingError> {
        if k == 0 {
            return Err(EmbeddingError::Invalid("sample size K must be at least 1".into()));
        }
        let n = self.record(key)?.clips;
        if n <= k {
            return Ok((0..n).collect());
        }
        let mut rng = rng_for(seed, &[]);
        let mut idx = index::sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        Ok(idx)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(EmbeddingError::Truncated {
            offset: self.pos,
            expected: self.pos.saturating_add(n),
            actual: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, EmbeddingError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, EmbeddingError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
