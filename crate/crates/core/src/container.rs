//! Named-tensor container shared by checkpoints and bank files.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   b"CSETNSR\0"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"kind": str, "meta": {...}, "tensors": [{"name", "shape", "offset"}]}
//! data         concatenated f32 values, offsets counted in elements from the start of data
//! trailer      32-byte SHA-256 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"CSETNSR\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

/// Serialized container bytes. Deterministic for equal inputs.
pub fn encode(kind: &str, meta: serde_json::Value, tensors: &[(String, &Tensor)]) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut data = Vec::new();
    let mut offset = 0;
    for (name, t) in tensors {
        entries.push(Entry { name: name.clone(), shape: t.shape().to_vec(), offset });
        offset += t.len();
        data.extend_from_slice(&t.to_le_bytes());
    }
    let header = serde_json::to_vec(&Header { kind: kind.to_string(), meta, tensors: entries })
        .map_err(|e| Error::Persistence(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + data.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Parses container bytes, checking magic, version, kind and the trailer hash.
pub fn decode(bytes: &[u8], kind: &str) -> Result<(serde_json::Value, BTreeMap<String, Tensor>)> {
    let corrupt = |why: &str| Error::Persistence(format!("corrupt {kind} file: {why}"));
    if bytes.len() < 8 + 4 + 8 + 32 {
        return Err(corrupt("truncated"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Persistence(format!(
            "unsupported {kind} format version {version} (this build reads version {FORMAT_VERSION})"
        )));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(corrupt("checksum mismatch (truncated or modified)"));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let data_start =
        20usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| corrupt("header overruns file"))?;
    let header: Header =
        serde_json::from_slice(&body[20..data_start]).map_err(|e| corrupt(&format!("unreadable header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Persistence(format!("expected a {kind} file, found {:?}", header.kind)));
    }
    let data = &body[data_start..];
    let mut tensors = BTreeMap::new();
    for e in header.tensors {
        let len: usize = e.shape.iter().product();
        let (start, end) = (e.offset * 4, (e.offset + len) * 4);
        if end > data.len() || len == 0 {
            return Err(corrupt(&format!("tensor {} out of bounds", e.name)));
        }
        let values = data[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.insert(e.name, Tensor::new(e.shape, values)?);
    }
    Ok((header.meta, tensors))
}

/// Writes through a temporary sibling and renames, so a failed write never
/// leaves a half-written file under `path`.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let fail = |e: std::io::Error| Error::Persistence(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(fail)?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        fail(e)
    })?;
    fs::rename(&tmp, path).map_err(fail)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
