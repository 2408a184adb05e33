// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary checkpoint format.
//!
//! ```text
//! "GRAFTCKPT1"            10 bytes magic
//! header_len              u64, little endian
//! header                  UTF-8 JSON, header_len bytes
//! data                    little-endian f64 buffers in manifest order
//! ```
//!
//! The header holds the format version, the model config and a manifest of
//! `{component, role, shape, offset}` entries; offsets are byte offsets
//! into the data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::{ComponentParams, ModelParams, ParamSource};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 10] = b"GRAFTCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    metadata: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    component: String,
    role: Role,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    Weight,
    Bias,
}

/// Serializes a weight set to bytes.
pub fn encode(params: &ModelParams) -> Vec<u8> {
    encode_with_metadata(params, &[])
}

/// [`encode`] with free-form `key, value` pairs stored in the header.
pub fn encode_with_metadata(params: &ModelParams, metadata: &[(String, String)]) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (id, c) in params.config().component_ids().iter().zip(params.components()) {
        let mut add = |role, t: &Tensor| {
            entries.push(Entry {
                component: id.to_string(),
                role,
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel() * 8;
        };
        add(Role::Weight, &c.weight);
        if let Some(b) = &c.bias {
            add(Role::Bias, b);
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: params.config().clone(),
        tensors: entries,
        metadata: metadata.to_vec(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for c in params.components() {
        for t in std::iter::once(&c.weight).chain(c.bias.as_ref()) {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let rest = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::Format("bad magic bytes".into()))?;
    if rest.len() < 8 {
        return Err(Error::Format("truncated header length".into()));
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < header_len {
        return Err(Error::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    Ok((header, &rest[header_len..]))
}

/// Parses bytes produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let (header, data) = read_header(bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let config = header.config;
    config.validate()?;

    let read = |e: &Entry| -> Result<Tensor> {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * 8;
        if end > data.len() {
            return Err(Error::Format(format!("{} {:?} runs past end of file", e.component, e.role)));
        }
        let values = data[e.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(&e.shape, values)
    };

    let mut entries = header.tensors.iter().peekable();
    let mut comps = Vec::with_capacity(config.n_components());
    for id in config.component_ids() {
        let name = id.to_string();
        let w = entries
            .next()
            .filter(|e| e.component == name && e.role == Role::Weight)
            .ok_or_else(|| Error::Format(format!("manifest missing weight of {name}")))?;
        let weight = read(w)?;
        let bias = match entries.peek() {
            Some(e) if e.component == name && e.role == Role::Bias => Some(read(entries.next().expect("peeked"))?),
            _ => None,
        };
        comps.push(ComponentParams { weight, bias });
    }
    if let Some(extra) = entries.next() {
        return Err(Error::Format(format!("unexpected manifest entry {}", extra.component)));
    }
    ModelParams::from_components(config, comps)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint_with_metadata(
    params: &ModelParams,
    metadata: &[(String, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_with_metadata(params, metadata)).map_err(|e| Error::io(path, e))
}

/// Metadata pairs stored by [`save_checkpoint_with_metadata`].
pub fn read_checkpoint_metadata(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_header(&bytes)?.0.metadata)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Hex SHA-256 of the encoded checkpoint, used to identify weight sets in
/// report manifests.
pub fn params_hash(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(encode(params)))
}
