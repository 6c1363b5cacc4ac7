//! `NNWB` weights blob.
//!
//! ```text
//! magic "NNWB" | u32 version (1) | u32 tensor_count
//! tensor_count x { u32 name_len | name (UTF-8) | u8 dtype (0 = f32) | u8 rank
//!                  | u32 dims[rank] | u64 byte_offset | u64 byte_len }
//! raw little-endian f32 payloads
//! ```
//!
//! `byte_offset` is absolute from the start of the file. The writer emits
//! tensors in name order, so encoding is a pure function of the map.

use std::collections::BTreeMap;

use super::reader::ByteReader;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NNWB";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

pub fn encode_weights(weights: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let mut header_len = 12usize;
    for (name, t) in weights {
        header_len += 4 + name.len() + 2 + 4 * t.rank() + 16;
    }
    let payload_len: usize = weights.values().map(|t| 4 * t.len()).sum();
    let mut out = Vec::with_capacity(header_len + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(weights.len(), "tensor count")?.to_le_bytes());

    let mut offset = header_len as u64;
    for (name, t) in weights {
        out.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::Format(format!("tensor `{name}` rank exceeds 255")))?;
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
        }
        let len = 4 * t.len() as u64;
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        offset += len;
    }
    debug_assert_eq!(out.len(), header_len);
    for t in weights.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected NNWB".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported NNWB version {version}")));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_owned();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Dtype {
                expected: "f32",
                found: dtype,
            });
        }
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        let len = r.u64()?;
        entries.push((name, shape, offset, len));
    }
    let table_end = (bytes.len() - r.remaining().len()) as u64;

    let mut weights = BTreeMap::new();
    for (name, shape, offset, len) in entries {
        let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if numel.and_then(|n| n.checked_mul(4)) != Some(len as usize) {
            return Err(Error::Format(format!(
                "tensor `{name}`: byte_len {len} does not match shape {shape:?}"
            )));
        }
        if offset < table_end {
            return Err(Error::Format(format!(
                "tensor `{name}`: offset {offset} points into the header (ends at {table_end})"
            )));
        }
        let start = usize::try_from(offset)
            .map_err(|_| Error::Format(format!("tensor `{name}`: offset out of range")))?;
        let end = start
            .checked_add(len as usize)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "tensor `{name}` spans bytes {start}..{} of a {}-byte blob",
                    start as u64 + len,
                    bytes.len()
                ))
            })?;
        let data = bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor =
            Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
        if weights.insert(name.clone(), tensor).is_some() {
            return Err(Error::Format(format!("duplicate tensor name `{name}`")));
        }
    }
    Ok(weights)
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}
