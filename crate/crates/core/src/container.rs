//! The `GLW1` weights container shared by float and int8 models.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "GLW1" | u32 metadata length | UTF-8 JSON metadata | zero pad to 64
//! tensor payloads in metadata order, each starting on a 64-byte boundary
//! ```
//!
//! Tensor offsets in the metadata are relative to the start of the payload
//! section. The reported model size is the container's byte length.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Layer, ModelGraph, ModelMeta, ParamArray};

pub const MAGIC: &[u8; 4] = b"GLW1";
pub const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I8,
    I32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::I8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    I8(Vec<i8>),
    I32(Vec<i32>),
}

impl Payload {
    pub fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::I8(_) => DType::I8,
            Payload::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::I8(v) => v.len(),
            Payload::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
            Payload::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => Payload::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::I8 => Payload::I8(bytes.iter().map(|&b| b as i8).collect()),
            DType::I32 => Payload::I32(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerKind {
    Float,
    Int8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: ContainerKind,
    pub model: ModelMeta,
    pub layers: serde_json::Value,
    /// Byte size of the float container an int8 model was quantized from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_size_bytes: Option<u64>,
    #[serde(default)]
    pub tensors: Vec<TensorEntry>,
}

fn align_up(v: usize) -> usize {
    v.div_ceil(ALIGN) * ALIGN
}

/// Serializes `header` (its tensor list is rebuilt) and the payloads.
pub fn write(mut header: Header, tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut offset = 0usize;
    header.tensors = tensors
        .iter()
        .map(|t| {
            let nbytes = t.payload.len() * t.payload.dtype().size();
            let entry = TensorEntry {
                name: t.name.clone(),
                dtype: t.payload.dtype(),
                shape: t.shape.clone(),
                offset: offset as u64,
                nbytes: nbytes as u64,
            };
            offset = align_up(offset + nbytes);
            entry
        })
        .collect();
    let meta = serde_json::to_vec(&header)?;
    let meta_len = u32::try_from(meta.len()).map_err(|_| Error::Container("metadata too large".into()))?;
    let mut out = Vec::with_capacity(align_up(8 + meta.len()) + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&meta);
    out.resize(align_up(out.len()), 0);
    let data_start = out.len();
    for (t, e) in tensors.iter().zip(&header.tensors) {
        out.resize(data_start + e.offset as usize, 0);
        t.payload.write_le(&mut out);
    }
    Ok(out)
}

/// Parses a container into its header and named payloads.
pub fn read(bytes: &[u8]) -> Result<(Header, BTreeMap<String, NamedTensor>)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Container("missing GLW1 magic".into()));
    }
    let meta_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let meta_end = 8usize.checked_add(meta_len).filter(|&e| e <= bytes.len());
    let Some(meta_end) = meta_end else {
        return Err(Error::Container("metadata length exceeds file".into()));
    };
    let header: Header = serde_json::from_slice(&bytes[8..meta_end])?;
    let data_start = align_up(meta_end);
    let mut tensors = BTreeMap::new();
    for e in &header.tensors {
        let start = data_start + e.offset as usize;
        let end = start + e.nbytes as usize;
        if start % ALIGN != 0 || end > bytes.len() {
            return Err(Error::Container(format!("tensor {} is misaligned or truncated", e.name)));
        }
        let numel: usize = e.shape.iter().product();
        if numel * e.dtype.size() != e.nbytes as usize {
            return Err(Error::Container(format!("tensor {} size does not match its shape", e.name)));
        }
        let payload = Payload::read_le(e.dtype, &bytes[start..end]);
        tensors.insert(e.name.clone(), NamedTensor { name: e.name.clone(), shape: e.shape.clone(), payload });
    }
    Ok((header, tensors))
}

pub fn peek_kind(bytes: &[u8]) -> Result<ContainerKind> {
    Ok(read_header(bytes)?.kind)
}

pub fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Container("missing GLW1 magic".into()));
    }
    let meta_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if 8 + meta_len > bytes.len() {
        return Err(Error::Container("metadata length exceeds file".into()));
    }
    Ok(serde_json::from_slice(&bytes[8..8 + meta_len])?)
}

/// Float container for `model`: every weight-store slot as an f32 payload,
/// in slot-name order.
pub fn save_float(model: &ModelGraph) -> Result<Vec<u8>> {
    let header = Header {
        kind: ContainerKind::Float,
        model: model.meta.clone(),
        layers: serde_json::to_value(model.layers())?,
        source_size_bytes: None,
        tensors: Vec::new(),
    };
    let tensors: Vec<NamedTensor> = model
        .weights()
        .iter()
        .map(|(name, p)| NamedTensor { name: name.clone(), shape: p.shape.clone(), payload: Payload::F32(p.data.clone()) })
        .collect();
    write(header, &tensors)
}

pub fn load_float(bytes: &[u8]) -> Result<ModelGraph> {
    let (header, tensors) = read(bytes)?;
    if header.kind != ContainerKind::Float {
        return Err(Error::Container("expected a float container".into()));
    }
    let layers: Vec<Layer> = serde_json::from_value(header.layers)?;
    let mut weights = BTreeMap::new();
    for (name, t) in tensors {
        let Payload::F32(data) = t.payload else {
            return Err(Error::Container(format!("float container holds non-f32 tensor {name}")));
        };
        weights.insert(name, ParamArray::new(t.shape, data));
    }
    ModelGraph::new(header.model, layers, weights)
}

/// Serde adapters that store f32 values as f64 so JSON round-trips are exact.
pub mod f32_as_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(*v as f64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f32, D::Error> {
        Ok(f64::deserialize(d)? as f32)
    }
}

pub mod f32_vec_as_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| x as f64))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
        Ok(Vec::<f64>::deserialize(d)?.into_iter().map(|x| x as f32).collect())
    }
}
