//! Parameter storage and the `NSTW` weight file.
//!
//! Layout (little-endian, no padding): magic `NSTW`, version `u32 = 1`,
//! layer count `u32`; per layer a `u16` name length, the UTF-8 name and a
//! `u8` tensor count; per tensor a `u8` rank, one `u32` per dimension and the
//! raw `f32` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::spec::{LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::rng::{sub_rng, JobRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"NSTW";
pub const WEIGHT_VERSION: u32 = 1;

/// Half-width of the uniform distribution used for a fresh classifier head.
/// Keeps the initial softmax close to uniform.
pub const HEAD_INIT_BOUND: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeightStore<T> {
    params: BTreeMap<String, Vec<Tensor<T>>>,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        WeightStore {
            params: BTreeMap::new(),
        }
    }

    /// He-uniform weights and zero biases for every conv/linear layer; the
    /// training head gets small weights instead (see [`HEAD_INIT_BOUND`]).
    pub fn random(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut store = WeightStore::new();
        let head = spec.head_name().map(str::to_owned);
        for (i, layer) in spec.param_layers().enumerate() {
            let mut rng = sub_rng(seed, "init", i as u64);
            let is_head = head.as_deref() == Some(layer.name.as_str());
            store.params.insert(layer.name.clone(), init_layer(&layer.kind, is_head, &mut rng)?);
        }
        Ok(store)
    }

    /// Replaces the training head with a fresh small-weight head sized for `spec`.
    pub fn reset_head(&mut self, spec: &NetworkSpec, seed: u64) -> Result<()> {
        let name = spec
            .head_name()
            .ok_or_else(|| Error::Validation("network has no linear head".into()))?;
        let kind = &spec.layers()[spec.index_of(name).expect("head is in the spec")].kind;
        let mut rng = sub_rng(seed, "head", 0);
        self.params.insert(name.to_string(), init_layer(kind, true, &mut rng)?);
        Ok(())
    }

    /// Output width of the stored layer `name` (rows of its weight matrix).
    pub fn out_features(&self, name: &str) -> Option<usize> {
        self.params.get(name)?.first().map(|w| w.shape()[0])
    }

    pub fn insert(&mut self, name: impl Into<String>, tensors: Vec<Tensor<T>>) {
        self.params.insert(name.into(), tensors);
    }

    pub fn get(&self, name: &str) -> Option<&[Tensor<T>]> {
        self.params.get(name).map(Vec::as_slice)
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut Vec<Tensor<T>>> {
        self.params.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Vec<Tensor<T>>> {
        self.params.remove(name)
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Tensor<T>])> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// `(weights, bias)` of a parameterized layer.
    pub fn layer(&self, name: &str) -> Result<(&Tensor<T>, &Tensor<T>)> {
        match self.params.get(name).map(Vec::as_slice) {
            Some([w, b]) => Ok((w, b)),
            Some(other) => Err(Error::Validation(format!("layer `{name}` has {} tensors, expected 2", other.len()))),
            None => Err(Error::Validation(format!("missing parameters for layer `{name}`"))),
        }
    }

    /// Squared L2 norm of all weight tensors, biases excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.params.values().filter_map(|v| v.first()).map(Tensor::norm_sq).sum()
    }

    /// Checks that every parameterized layer of `spec` is present with the
    /// right shapes and that nothing else is stored.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        for layer in spec.param_layers() {
            let tensors = self
                .params
                .get(&layer.name)
                .ok_or_else(|| Error::Validation(format!("weight store is missing layer `{}`", layer.name)))?;
            let expected = layer.kind.param_shapes();
            let found: Vec<&[usize]> = tensors.iter().map(Tensor::shape).collect();
            if found != expected.iter().map(Vec::as_slice).collect::<Vec<_>>() {
                return Err(Error::Validation(format!(
                    "layer `{}` has tensor shapes {found:?}, spec expects {expected:?}",
                    layer.name
                )));
            }
        }
        if let Some(extra) = self.params.keys().find(|k| spec.index_of(k).map_or(true, |i| !spec.layers()[i].kind.has_params())) {
            return Err(Error::Validation(format!("weight store has layer `{extra}` not in the spec")));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        WeightStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(Tensor::cast).collect()))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32::try_from(self.params.len()).map_err(|_| too_large("layer count"))?.to_le_bytes());
        for (name, tensors) in &self.params {
            let len = u16::try_from(name.len()).map_err(|_| too_large("layer name"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::try_from(tensors.len()).map_err(|_| too_large("tensor count"))?);
            for t in tensors {
                out.push(t.rank() as u8);
                for &d in t.shape() {
                    out.extend_from_slice(&u32::try_from(d).map_err(|_| too_large("dimension"))?.to_le_bytes());
                }
                for v in t.data() {
                    out.extend_from_slice(&(v.wide() as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "weight file");
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::format("weight file", "bad magic, expected NSTW"));
        }
        let version = r.u32()?;
        if version != WEIGHT_VERSION {
            return Err(Error::format("weight file", format!("unsupported version {version}")));
        }
        let layers = r.u32()?;
        let mut store = WeightStore::new();
        for _ in 0..layers {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("weight file", "layer name is not UTF-8"))?
                .to_string();
            let count = r.u8()?;
            let mut tensors = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let rank = r.u8()? as usize;
                let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                let len: usize = shape.iter().product();
                let data = r.f32s(len)?.into_iter().map(|v| T::of(v as f64)).collect();
                let t = Tensor::new(&shape, data)
                    .map_err(|e| Error::format("weight file", format!("layer `{name}`: {e}")))?;
                tensors.push(t);
            }
            if store.params.insert(name.clone(), tensors).is_some() {
                return Err(Error::format("weight file", format!("layer `{name}` appears twice")));
            }
        }
        if !r.is_done() {
            return Err(Error::format("weight file", "trailing bytes after last layer"));
        }
        Ok(store)
    }
}

fn too_large(what: &str) -> Error {
    Error::InvalidArgument(format!("{what} too large for the weight format"))
}

fn init_layer<T: Scalar>(kind: &LayerKind, is_head: bool, rng: &mut JobRng) -> Result<Vec<Tensor<T>>> {
    let shapes = kind.param_shapes();
    let fan_in: usize = shapes[0][1..].iter().product();
    let bound = if is_head {
        HEAD_INIT_BOUND
    } else {
        (6.0 / fan_in as f64).sqrt()
    };
    let data = (0..shapes[0].iter().product::<usize>())
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect();
    Ok(vec![Tensor::new(&shapes[0], data)?, Tensor::zeros(&shapes[1])?])
}

pub fn save_weights<T: Scalar>(store: &WeightStore<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<WeightStore<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightStore::from_bytes(&bytes)
}

/// Loads a weight file and checks it against `spec`.
pub fn load_weights_for<T: Scalar>(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<WeightStore<T>> {
    let store = load_weights(path)?;
    store.validate(spec)?;
    Ok(store)
}

/// Little-endian cursor shared by the binary formats.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        ByteReader { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Truncated { what: self.what })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(Error::Truncated { what: self.what })?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
