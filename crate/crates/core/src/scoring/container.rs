//! Self-describing binary container for model parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "LSRLMODL"
//! version  u32
//! meta     u64 length + UTF-8 JSON
//! count    u32
//! count × { name: u32 length + UTF-8, rank: u32, dims: rank × u64 }
//! values   f64 for every tensor in table order
//! ```

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"LSRLMODL";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("invalid shape table: {0}")]
    Shape(String),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("JSON values serialize");
        let values: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(32 + meta.len() + values * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            assert_eq!(
                t.shape.iter().product::<usize>(),
                t.data.len(),
                "tensor {}",
                t.name
            );
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| ContainerError::BadMagic)? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let meta_len = r.len_u64()?;
        let metadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| ContainerError::Metadata(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut table = Vec::new();
        let mut total: usize = 0;
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            if name_len > MAX_NAME {
                return Err(ContainerError::Shape(format!("name of {name_len} bytes")));
            }
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| ContainerError::Shape("name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u32()? as usize;
            if rank > MAX_RANK {
                return Err(ContainerError::Shape(format!("rank {rank} of {name}")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut size: usize = 1;
            for _ in 0..rank {
                let d = r.len_u64()?;
                size = size
                    .checked_mul(d)
                    .ok_or_else(|| ContainerError::Shape(format!("{name} overflows")))?;
                shape.push(d);
            }
            total = total
                .checked_add(size)
                .ok_or_else(|| ContainerError::Shape("total size overflows".into()))?;
            table.push((name, shape, size));
        }
        let needed = total
            .checked_mul(8)
            .ok_or_else(|| ContainerError::Shape("total size overflows".into()))?;
        if r.remaining() < needed {
            return Err(ContainerError::Truncated(bytes.len()));
        }
        let tensors = table
            .into_iter()
            .map(|(name, shape, size)| {
                let data = r
                    .take(size * 8)
                    .expect("length checked")
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                NamedTensor { name, shape, data }
            })
            .collect();
        if r.remaining() > 0 {
            return Err(ContainerError::TrailingBytes(r.remaining()));
        }
        Ok(Container { metadata, tensors })
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], ContainerError> {
        if self.remaining() < len {
            return Err(ContainerError::Truncated(self.bytes.len()));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn len_u64(&mut self) -> Result<usize, ContainerError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| ContainerError::Shape(format!("length {v}")))
    }
}
