//! Labeled descriptors and the `NSTD` descriptor file.
//!
//! Layout (little-endian): magic `NSTD`, entry count `u32`, dimension `u32`;
//! per entry a `u16` id length, the UTF-8 id, an `i32` person id and `dim`
//! `f32` values.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vgg::ByteReader;

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"NSTD";

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorEntry<T> {
    pub item_id: String,
    pub person_id: i32,
    /// Rank-1 feature vector.
    pub vector: Tensor<T>,
}

/// Non-empty set of equal-length descriptors with unique item ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet<T> {
    entries: Vec<DescriptorEntry<T>>,
    dim: usize,
}

impl<T: Scalar> DescriptorSet<T> {
    pub fn new(entries: Vec<DescriptorEntry<T>>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Validation("descriptor set is empty".into()))?;
        let dim = first.vector.len();
        let mut ids = HashSet::new();
        for e in &entries {
            if e.vector.rank() != 1 || e.vector.len() != dim {
                return Err(Error::Validation(format!(
                    "descriptor `{}` has shape {:?}, expected [{dim}]",
                    e.item_id,
                    e.vector.shape()
                )));
            }
            if !ids.insert(e.item_id.as_str()) {
                return Err(Error::Validation(format!("duplicate item id `{}`", e.item_id)));
            }
        }
        Ok(DescriptorSet { entries, dim })
    }

    pub fn from_vectors(items: impl IntoIterator<Item = (String, i32, Vec<f64>)>) -> Result<Self> {
        let entries = items
            .into_iter()
            .map(|(item_id, person_id, v)| {
                Ok(DescriptorEntry {
                    item_id,
                    person_id,
                    vector: Tensor::from_f64(&[v.len()], &v)?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[DescriptorEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.entries.len()).map_err(|_| Error::InvalidArgument("too many descriptors".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::InvalidArgument("descriptor too long".into()))?;
        let mut out = Vec::with_capacity(12 + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(DESCRIPTOR_MAGIC);
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        for e in &self.entries {
            let len = u16::try_from(e.item_id.len())
                .map_err(|_| Error::InvalidArgument(format!("item id `{}` too long", e.item_id)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(e.item_id.as_bytes());
            out.extend_from_slice(&e.person_id.to_le_bytes());
            for v in e.vector.data() {
                out.extend_from_slice(&(v.wide() as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "descriptor file");
        if r.take(4)? != DESCRIPTOR_MAGIC {
            return Err(Error::format("descriptor file", "bad magic, expected NSTD"));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::format("descriptor file", "zero dimension"));
        }
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let item_id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("descriptor file", "item id is not UTF-8"))?
                .to_string();
            let person_id = r.i32()?;
            let data = r.f32s(dim)?.into_iter().map(|v| T::of(v as f64)).collect();
            let vector = Tensor::new(&[dim], data).map_err(|e| Error::format("descriptor file", e.to_string()))?;
            entries.push(DescriptorEntry {
                item_id,
                person_id,
                vector,
            });
        }
        if !r.is_done() {
            return Err(Error::format("descriptor file", "trailing bytes after last entry"));
        }
        Self::new(entries).map_err(|e| Error::format("descriptor file", e.to_string()))
    }
}

pub fn save_descriptors<T: Scalar>(set: &DescriptorSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_descriptors<T: Scalar>(path: impl AsRef<Path>) -> Result<DescriptorSet<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DescriptorSet::from_bytes(&bytes)
}
