//! The `.htsr` container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                          |
//! |--------------|----------------------------------|
//! | 4            | magic `HTSR`                     |
//! | 1            | version, `0x01`                  |
//! | 1            | dtype, `0x00` for f32            |
//! | 1            | rank `r` (1..=4)                 |
//! | 4 × r        | dimensions as u32                |
//! | 4 × Π dims   | row-major f32 payload            |

use std::fs;
use std::path::Path;

use super::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HTSR";
const VERSION: u8 = 0x01;
const DTYPE_F32: u8 = 0x00;

pub fn encode_tensor(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 7 {
        return Err(Error::TensorFormat(format!(
            "header needs 7 bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::TensorFormat(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::TensorFormat(format!(
            "unsupported version {:#04x}",
            bytes[4]
        )));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::TensorFormat(format!(
            "unsupported dtype {:#04x}",
            bytes[5]
        )));
    }
    let rank = bytes[6] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::TensorFormat(format!("invalid rank {rank}")));
    }
    let dims_end = 7 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(Error::TensorLength {
            expected: dims_end,
            actual: bytes.len(),
        });
    }
    let shape: Vec<usize> = bytes[7..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(Error::TensorFormat(format!("zero dimension in {shape:?}")));
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::TensorFormat(format!("shape {shape:?} overflows")))?;
    let payload = &bytes[dims_end..];
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::TensorFormat(format!("shape {shape:?} overflows")))?;
    if payload.len() != expected {
        return Err(Error::TensorLength {
            expected,
            actual: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}
