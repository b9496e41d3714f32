//! Versioned binary container of named tensors.
//!
//! Layout (all integers little-endian): magic `GLORACKP`, `u32` version, `u64`
//! tensor count, then per tensor a `u32` name length, UTF-8 name, `u32` rank,
//! `rank × u64` dimensions and the values as `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::tensor::Tensor;
use crate::TensorError;

pub const MAGIC: &[u8; 8] = b"GLORACKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TensorError::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.tensors.iter().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(t.rows as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols as u64).to_le_bytes());
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(TensorError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let count = r.u64()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| TensorError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()?;
            let dims: Vec<usize> = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<_, _>>()?;
            let (rows, cols) = match dims[..] {
                [n] => (1, n),
                [a, b] => (a, b),
                _ => {
                    return Err(TensorError::Checkpoint(format!(
                        "{name}: unsupported rank {rank}"
                    )))
                }
            };
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| TensorError::Checkpoint("dimension overflow".into()))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| TensorError::Checkpoint("dimension overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor { rows, cols, data }));
        }
        if r.pos != bytes.len() {
            return Err(TensorError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        std::fs::write(path.as_ref(), self.to_bytes())
            .map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        let bytes =
            std::fs::read(path.as_ref()).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}
