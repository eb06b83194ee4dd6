//! Versioned parameter container.
//!
//! Layout: the 8-byte magic `NTSFCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then every tensor's
//! scalars as little-endian `f64` in header order (complex tensors as
//! interleaved real/imaginary pairs). Serialization is deterministic, so equal
//! operators produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Architecture, OperatorHyper};
use super::model::Operator;
use crate::error::{Error, Result};
use crate::numerics::{ComplexTensor, ParamSet, ParamTensor, RealTensor};

const MAGIC: &[u8; 8] = b"NTSFCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Offset into the data section, in `f64` scalars.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    hyper: OperatorHyper,
    arch: Architecture,
    seed: u64,
    tensors: Vec<TensorEntry>,
    data_sha256: String,
    metadata: BTreeMap<String, serde_json::Value>,
}

/// An operator plus free-form metadata (scalers, sampling interval, …).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub operator: Operator,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn new(operator: Operator) -> Self {
        Self {
            operator,
            metadata: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let op = &self.operator;
        let mut data = Vec::with_capacity(op.num_params() * 8);
        let mut tensors = Vec::with_capacity(op.params.len());
        let mut offset = 0;
        for (name, t) in op.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                dtype: t.dtype().to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.flat() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.flat().len();
        }
        let header = Header {
            hyper: op.hyper,
            arch: op.arch,
            seed: op.seed,
            tensors,
            data_sha256: hex(&Sha256::digest(&data)),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::data(format!("checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(20 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::data(format!("checkpoint: {msg}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&format!("header: {e}")))?;
        let data = &body[hlen..];
        if data.len() % 8 != 0 {
            return Err(bad("data section is not a whole number of f64 values"));
        }
        if hex(&Sha256::digest(data)) != header.data_sha256 {
            return Err(bad("data checksum mismatch"));
        }
        let scalars: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();

        let mut params = ParamSet::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let width = match e.dtype.as_str() {
                "f64" => 1,
                "c128" => 2,
                other => return Err(bad(&format!("tensor {}: unknown dtype {other}", e.name))),
            };
            let slice = scalars
                .get(e.offset..e.offset + n * width)
                .ok_or_else(|| bad(&format!("tensor {} out of bounds", e.name)))?;
            let tensor = if width == 1 {
                ParamTensor::Real(RealTensor::new(e.shape.clone(), slice.to_vec())?)
            } else {
                let z = slice.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                ParamTensor::Complex(ComplexTensor::new(e.shape.clone(), z)?)
            };
            params.push(e.name.clone(), tensor);
        }
        let operator = Operator::from_parts(header.hyper, header.arch, params, header.seed)?;
        Ok(Self {
            operator,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
