//! Binary tensor containers.
//!
//! Layout: 8-byte magic, `u32` tensor count, then per tensor a `u32` name
//! length, the UTF-8 name, a `u32` rank and `rank` `u32` dims, followed by
//! all payloads as `f32` in the same order. Integers and floats are
//! little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::FusionWeights;
use crate::tensor::NdArray;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"SFWT0001";
pub const TENSOR_MAGIC: &[u8; 8] = b"SFTN0001";

pub fn encode(magic: &[u8; 8], tensors: &[(String, NdArray)]) -> Vec<u8> {
    let payload: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(16 + 4 * payload);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, t) in tensors {
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub fn decode(magic: &[u8; 8], bytes: &[u8], path: &Path) -> Result<Vec<(String, NdArray)>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != magic {
        return Err(r.fail(format!(
            "bad magic, expected `{}`",
            String::from_utf8_lossy(magic)
        )));
    }
    let count = r.u32()?;
    let mut headers = Vec::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| r.fail("tensor name is not UTF-8"))?;
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        headers.push((name, dims));
    }
    let mut out = Vec::with_capacity(count);
    for (name, dims) in headers {
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| r.fail(format!("tensor `{name}` is too large")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| r.fail("payload overflow"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push((name, NdArray::new(dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

fn read(magic: &[u8; 8], path: &Path) -> Result<Vec<(String, NdArray)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(magic, &bytes, path)
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, NdArray)>> {
    read(TENSOR_MAGIC, path)
}

pub fn write_tensors(path: &Path, tensors: &[(String, NdArray)]) -> Result<()> {
    super::write_bytes(path, &encode(TENSOR_MAGIC, tensors))
}

pub fn read_weights(path: &Path) -> Result<FusionWeights> {
    FusionWeights::from_named(read(WEIGHTS_MAGIC, path)?)
}

pub fn write_weights(path: &Path, weights: &FusionWeights) -> Result<()> {
    super::write_bytes(path, &encode(WEIGHTS_MAGIC, &weights.to_named()))
}
