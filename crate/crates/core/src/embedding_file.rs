//! Row-oriented store of precomputed embeddings.
//!
//! Little-endian layout:
//!
//! ```text
//! "ITEM" | version u16 = 1 | reserved u16 = 0 | dim u32 | count u64 | count x dim f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"ITEM";
pub const EMBEDDING_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || u32::try_from(dim).is_err() {
            return Err(Error::InvalidInput(format!("embedding file dim {dim} out of range")));
        }
        Ok(Self { dim, data: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: &[f32]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(self.count() - 1)
    }

    pub fn row(&self, index: usize) -> Result<&[f32]> {
        if index >= self.count() {
            return Err(Error::MissingArtifact(format!(
                "row {index} out of range (file has {} rows)",
                self.count()
            )));
        }
        Ok(&self.data[index * self.dim..(index + 1) * self.dim])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "embedding file truncated: {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != EMBEDDING_MAGIC {
            return Err(Error::Format(format!("bad embedding magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported embedding file version {version}")));
        }
        let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
        if reserved != 0 {
            return Err(Error::Format(format!("reserved header field is {reserved}, expected 0")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("embedding dim is 0".into()));
        }
        let payload = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format(format!("embedding payload size overflows: {count} x {dim}")))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() < payload {
            return Err(Error::Format(format!(
                "embedding payload truncated: {} bytes, header implies {payload}",
                body.len()
            )));
        }
        if body.len() > payload {
            return Err(Error::Format(format!(
                "{} trailing bytes after embedding payload",
                body.len() - payload
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dim, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
