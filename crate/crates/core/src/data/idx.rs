//! IDX container (the MNIST distribution format).
//!
//! ```text
//! bytes 0-1   0x00 0x00
//! byte  2     type code (only 0x08 = unsigned byte is accepted)
//! byte  3     number of dimensions
//! then        one big-endian u32 per dimension
//! then        product(dims) raw bytes
//! ```

use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

/// A parsed IDX payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// The 4-byte magic as a big-endian integer, e.g. 2051 for 3-d ubyte.
    pub fn magic(&self) -> u32 {
        ((UBYTE as u32) << 8) | self.dims.len() as u32
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Parse(format!(
            "truncated: {} bytes, header needs at least 4",
            bytes.len()
        )));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Parse(format!(
            "bad magic prefix {:02x}{:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != UBYTE {
        return Err(Error::UnsupportedFormat(format!("IDX type code 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    let header_len = 4 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(Error::Parse(format!(
            "truncated: header declares {ndim} dims but buffer has {} bytes",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Parse("dimension product overflows".into()))?;
    let body = &bytes[header_len..];
    if body.len() < len {
        return Err(Error::Parse(format!(
            "truncated: dims {dims:?} need {len} data bytes, found {}",
            body.len()
        )));
    }
    if body.len() > len {
        return Err(Error::Parse(format!(
            "{} trailing bytes after payload",
            body.len() - len
        )));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn write_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}
