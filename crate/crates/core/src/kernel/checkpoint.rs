use std::path::Path;

use indexmap::IndexMap;

use super::{KernelError, Matrix, Scalar};

pub const APRM_MAGIC: &[u8; 4] = b"APRM";
pub const APRM_VERSION: u32 = 1;

/// Named `f32` tensors in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: IndexMap<String, Matrix<f32>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<T: Scalar>(&mut self, name: impl Into<String>, m: &Matrix<T>) {
        self.tensors.insert(name.into(), m.cast());
    }

    pub fn insert_vec<T: Scalar>(&mut self, name: impl Into<String>, v: &[T]) {
        self.insert(name, &Matrix::row_vector(v.to_vec()));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<f32>> {
        self.tensors.get(name)
    }

    /// Tensor `name`, cast to `T`, checked against `shape`.
    pub fn take<T: Scalar>(&self, name: &str, shape: (usize, usize)) -> Result<Matrix<T>, KernelError> {
        let m = self.get(name).ok_or_else(|| KernelError::Checkpoint(format!("missing tensor `{name}`")))?;
        if m.shape() != shape {
            return Err(KernelError::Checkpoint(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                m.shape()
            )));
        }
        Ok(m.cast())
    }

    pub fn take_vec<T: Scalar>(&self, name: &str, len: usize) -> Result<Vec<T>, KernelError> {
        Ok(self.take::<T>(name, (1, len))?.into_data())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Adds every tensor of `other`, replacing same-named ones.
    pub fn merge(&mut self, other: Checkpoint) {
        self.tensors.extend(other.tensors);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(APRM_MAGIC);
        out.extend_from_slice(&APRM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KernelError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != APRM_MAGIC {
            return Err(KernelError::CheckpointFormat { offset: 0, message: format!("bad magic {magic:?}") });
        }
        let version = r.u32()?;
        if version != APRM_VERSION {
            return Err(KernelError::CheckpointFormat { offset: 4, message: format!("unsupported version {version}") });
        }
        let count = r.u64()?;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let at = r.pos;
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| KernelError::CheckpointFormat { offset: at + 2, message: "name is not UTF-8".into() })?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let payload = r.take(rows * cols * 4)?;
            let data: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if tensors.insert(name.clone(), Matrix::from_vec(rows, cols, data)?).is_some() {
                return Err(KernelError::CheckpointFormat { offset: at, message: format!("duplicate tensor `{name}`") });
            }
        }
        if r.pos != bytes.len() {
            return Err(KernelError::CheckpointFormat { offset: r.pos, message: "trailing bytes".into() });
        }
        Ok(Checkpoint { tensors })
    }

    pub fn write(&self, path: &Path) -> Result<(), KernelError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| KernelError::Io { path: path.display().to_string(), source })
    }

    pub fn read(path: &Path) -> Result<Self, KernelError> {
        let bytes = std::fs::read(path).map_err(|source| KernelError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KernelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| KernelError::CheckpointFormat {
            offset: self.pos,
            message: format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, KernelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, KernelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, KernelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let mut ck = Checkpoint::new();
        ck.insert("a.W", &Matrix::from_rows(&[vec![1.0f64, -2.0], vec![0.5, 3.25]]).unwrap());
        ck.insert_vec("a.bn.running_var", &[1.0f32]);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"APRM");
        let expected_len = 4 + 4 + 8 + (2 + 3 + 8 + 16) + (2 + 16 + 8 + 4);
        assert_eq!(bytes.len(), expected_len);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.take::<f64>("a.W", (2, 2)).unwrap().get(1, 1), 3.25);
        assert!(back.take::<f64>("a.W", (1, 4)).is_err());
        assert!(back.take::<f64>("nope", (1, 1)).is_err());
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::new();
        ck.insert_vec("x", &[1.0f32, 2.0]);
        let bytes = ck.to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(KernelError::CheckpointFormat { offset: 0, .. })));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
