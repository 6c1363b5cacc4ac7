//! `TBIN` dataset, trace, and label files.
//!
//! ```text
//! magic "TBIN" | u32 version (1) | u8 dtype (0 = f32, 1 = u32) | u8 rank
//! | u32 dims[rank] | raw little-endian payload
//! ```
//!
//! The first dimension is the sample count for dataset files.

use super::reader::ByteReader;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"TBIN";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_U32: u8 = 1;

/// Decoded contents of a TBIN file.
#[derive(Debug, Clone, PartialEq)]
pub enum TbinData {
    F32(Tensor),
    U32 { shape: Vec<usize>, data: Vec<u32> },
}

/// Ground truth for a dataset: class indices or regression targets `[N, out]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<u32>),
    Targets(Tensor),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn header(dtype: u8, shape: &[usize]) -> Result<Vec<u8>> {
    let rank = u8::try_from(shape.len()).map_err(|_| Error::Format("rank exceeds 255".into()))?;
    let mut out = Vec::with_capacity(10 + 4 * shape.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype);
    out.push(rank);
    for &d in shape {
        let d =
            u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_f32(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = header(DTYPE_F32, t.shape())?;
    out.reserve(4 * t.len());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_u32(shape: &[usize], data: &[u32]) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.iter().product::<usize>() != data.len() {
        return Err(Error::Dimension(format!(
            "shape {shape:?} does not hold {} elements",
            data.len()
        )));
    }
    let mut out = header(DTYPE_U32, shape)?;
    out.reserve(4 * data.len());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TbinData> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected TBIN".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported TBIN version {version}")));
    }
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 && dtype != DTYPE_U32 {
        return Err(Error::Dtype {
            expected: "f32 or u32",
            found: dtype,
        });
    }
    let rank = r.u8()? as usize;
    if rank == 0 {
        return Err(Error::Format("rank 0 tensors are not supported".into()));
    }
    let shape = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if shape.contains(&0) {
        return Err(Error::Format(format!("zero-sized dimension in {shape:?}")));
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
    let payload = r.remaining();
    if payload.len() < numel {
        let samples_present = payload.len() / (numel / shape[0]);
        return Err(Error::Truncated(format!(
            "shape {shape:?} needs {numel} payload bytes, found {} ({samples_present} of {} samples)",
            payload.len(),
            shape[0]
        )));
    }
    if payload.len() > numel {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - numel
        )));
    }
    let words = payload.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
    Ok(match dtype {
        DTYPE_F32 => TbinData::F32(Tensor::new(shape, words.map(f32::from_le_bytes).collect())?),
        _ => TbinData::U32 {
            shape,
            data: words.map(u32::from_le_bytes).collect(),
        },
    })
}

/// Decodes an `f32` tensor, rejecting other dtypes and non-finite values.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    match decode(bytes)? {
        TbinData::F32(t) => {
            t.check_finite("tensor file")?;
            Ok(t)
        }
        TbinData::U32 { .. } => Err(Error::Dtype {
            expected: "f32",
            found: DTYPE_U32,
        }),
    }
}

/// Decodes a rank-1 `u32` class-index file.
pub fn decode_classes(bytes: &[u8]) -> Result<Vec<u32>> {
    match decode(bytes)? {
        TbinData::U32 { shape, data } if shape.len() == 1 => Ok(data),
        TbinData::U32 { shape, .. } => Err(Error::Dimension(format!(
            "class file must be rank 1, got shape {shape:?}"
        ))),
        TbinData::F32(_) => Err(Error::Dtype {
            expected: "u32",
            found: DTYPE_F32,
        }),
    }
}

pub fn decode_labels(bytes: &[u8]) -> Result<Labels> {
    match decode(bytes)? {
        TbinData::U32 { shape, data } if shape.len() == 1 => Ok(Labels::Classes(data)),
        TbinData::U32 { shape, .. } => Err(Error::Dimension(format!(
            "class labels must be rank 1, got shape {shape:?}"
        ))),
        TbinData::F32(t) => {
            t.check_finite("label file")?;
            Ok(Labels::Targets(t))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let t = Tensor::new(vec![2, 1], vec![1.5, -2.0]).unwrap();
        let b = encode_f32(&t).unwrap();
        assert_eq!(&b[..4], b"TBIN");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(b[8], 0);
        assert_eq!(b[9], 2);
        assert_eq!(&b[10..14], &2u32.to_le_bytes());
        assert_eq!(&b[14..18], &1u32.to_le_bytes());
        assert_eq!(&b[18..22], &1.5f32.to_le_bytes());
        assert_eq!(b.len(), 26);
    }

    #[test]
    fn bad_magic() {
        let t = Tensor::from_vec(vec![1.0]).unwrap();
        let mut b = encode_f32(&t).unwrap();
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_sample() {
        let t = Tensor::zeros(vec![100, 3]).unwrap();
        let b = encode_f32(&t).unwrap();
        let cut = &b[..b.len() - 12];
        match decode(cut) {
            Err(Error::Truncated(msg)) => assert!(msg.contains("99 of 100"), "{msg}"),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn dtype_checks() {
        let b = encode_u32(&[3], &[0, 1, 2]).unwrap();
        assert_eq!(decode_classes(&b).unwrap(), vec![0, 1, 2]);
        assert!(matches!(decode_tensor(&b), Err(Error::Dtype { .. })));
        assert_eq!(decode_labels(&b).unwrap(), Labels::Classes(vec![0, 1, 2]));

        let mut bad = b.clone();
        bad[8] = 7;
        assert!(matches!(decode(&bad), Err(Error::Dtype { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let t = Tensor::from_vec(vec![1.0, f32::INFINITY]).unwrap();
        let b = encode_f32(&t).unwrap();
        assert!(matches!(decode_tensor(&b), Err(Error::NonFinite(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut b = encode_u32(&[1], &[4]).unwrap();
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }
}
