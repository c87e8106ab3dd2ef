//! `.fdck` checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"FDCK" | version: u32 | header_len: u64 | header (JSON, header_len bytes) | data
//! ```
//!
//! The JSON header carries the network spec, metadata, a tensor table
//! (`name`, `shape`, byte `offset` and `len` into the data section), the
//! data section length and a CRC32 of the data section. Tensors are stored
//! as consecutive little-endian `f64` values in spec order.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, CheckpointMeta, NetworkSpec, ParamMap};
use crate::error::{CheckpointError, Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_EXTENSION: &str = "fdck";

const MAGIC: &[u8; 4] = b"FDCK";
const VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
    data_len: u64,
    crc32: u32,
}

pub(super) fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    for slot in ckpt.spec.param_slots() {
        let t = &ckpt.params[&slot.name];
        let offset = data.len() as u64;
        for v in t.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: slot.name,
            shape: t.shape().to_vec(),
            offset,
            len: data.len() as u64 - offset,
        });
    }
    let header = Header {
        spec: ckpt.spec.clone(),
        meta: ckpt.meta.clone(),
        tensors,
        data_len: data.len() as u64,
        crc32: crc32fast::hash(&data),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    use CheckpointError::*;
    if bytes.len() < PREAMBLE || &bytes[..4] != MAGIC {
        return Err(CorruptHeader("missing FDCK magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CorruptHeader(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[PREAMBLE..];
    if header_len > body.len() as u64 {
        return Err(CorruptHeader(format!(
            "header length {header_len} exceeds file size"
        )));
    }
    let (json, data) = body.split_at(header_len as usize);
    let header: Header =
        serde_json::from_slice(json).map_err(|e| CorruptHeader(e.to_string()))?;
    header
        .spec
        .validate()
        .map_err(|e| CorruptHeader(e.to_string()))?;

    if (data.len() as u64) < header.data_len {
        return Err(Truncated {
            expected: header.data_len,
            found: data.len() as u64,
        });
    }
    if data.len() as u64 > header.data_len {
        return Err(CorruptHeader(format!(
            "{} trailing bytes after data section",
            data.len() as u64 - header.data_len
        )));
    }

    let slots = header.spec.param_slots();
    let declared: BTreeSet<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
    let expected: BTreeSet<&str> = slots.iter().map(|s| s.name.as_str()).collect();
    if declared != expected || header.tensors.len() != slots.len() {
        return Err(CorruptHeader(
            "tensor table does not match the spec's parameters".into(),
        ));
    }

    let mut params = ParamMap::new();
    let mut cursor = 0u64;
    for slot in &slots {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == slot.name)
            .expect("checked above");
        if entry.shape != slot.shape {
            return Err(ShapeMismatch {
                name: entry.name.clone(),
                expected: slot.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        let n: usize = slot.shape.iter().product();
        if entry.len != 8 * n as u64 {
            return Err(OffsetMismatch {
                name: entry.name.clone(),
                detail: format!("length {} bytes, shape needs {}", entry.len, 8 * n),
            });
        }
        if entry.offset != cursor {
            return Err(OffsetMismatch {
                name: entry.name.clone(),
                detail: format!("offset {} but previous tensor ends at {cursor}", entry.offset),
            });
        }
        cursor += entry.len;
        if cursor > header.data_len {
            return Err(OffsetMismatch {
                name: entry.name.clone(),
                detail: format!("ends at {cursor}, past data length {}", header.data_len),
            });
        }
        let raw = &data[entry.offset as usize..cursor as usize];
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(slot.shape.clone(), values).expect("length checked");
        params.insert(slot.name.clone(), tensor);
    }
    if cursor != header.data_len {
        return Err(OffsetMismatch {
            name: "<data>".into(),
            detail: format!("tensors cover {cursor} of {} bytes", header.data_len),
        });
    }

    let found = crc32fast::hash(data);
    if found != header.crc32 {
        return Err(Checksum {
            expected: header.crc32,
            found,
        });
    }

    Ok(Checkpoint {
        spec: header.spec,
        params,
        meta: header.meta,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(from_bytes(&bytes)?)
}
