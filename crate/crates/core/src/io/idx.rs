//! IDX files: big-endian header, unsigned-byte payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parsed header plus raw payload.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile> {
    if bytes.len() < 4 {
        return Err(Error::format("IDX file shorter than its magic number"));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(Error::format(format!(
            "bad IDX magic {magic:#010x}; only unsigned-byte data is supported"
        )));
    }
    let nd = bytes[3] as usize;
    let header = 4 + 4 * nd;
    if nd == 0 || bytes.len() < header {
        return Err(Error::format("truncated IDX header"));
    }
    let dims: Vec<usize> = (0..nd)
        .map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize)
        .collect();
    let len: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != len {
        return Err(Error::format(format!(
            "IDX payload has {} bytes, header dims {:?} need {len}",
            payload.len(),
            dims
        )));
    }
    Ok(IdxFile {
        magic,
        dims,
        payload: payload.to_vec(),
    })
}

pub fn encode_idx(magic: u32, dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Images scaled by 1/255 and reshaped to `reshape` (first index fastest
/// over the raw byte order of each image).
pub fn images_from_bytes(bytes: &[u8], reshape: &[usize]) -> Result<Vec<DenseTensor>> {
    let f = parse_idx(bytes)?;
    if f.magic != IMAGES_MAGIC {
        return Err(Error::format(format!("expected image magic {IMAGES_MAGIC:#010x}, got {:#010x}", f.magic)));
    }
    let n = f.dims[0];
    let per: usize = f.dims[1..].iter().product();
    let want: usize = reshape.iter().product();
    if want != per {
        return Err(Error::arg(format!(
            "reshape {reshape:?} has {want} entries, images have {per}"
        )));
    }
    (0..n)
        .map(|i| {
            let data = f.payload[i * per..(i + 1) * per].iter().map(|&b| b as f64 / 255.0).collect();
            DenseTensor::new(reshape.to_vec(), data)
        })
        .collect()
}

pub fn labels_from_bytes(bytes: &[u8]) -> Result<Vec<u32>> {
    let f = parse_idx(bytes)?;
    if f.magic != LABELS_MAGIC {
        return Err(Error::format(format!("expected label magic {LABELS_MAGIC:#010x}, got {:#010x}", f.magic)));
    }
    Ok(f.payload.iter().map(|&b| b as u32).collect())
}

pub fn load_idx_images(path: impl AsRef<Path>, reshape: &[usize]) -> Result<Vec<DenseTensor>> {
    images_from_bytes(&std::fs::read(path)?, reshape)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    labels_from_bytes(&std::fs::read(path)?)
}

/// Whether `bytes` start like an IDX file with the given magic.
pub fn has_magic(bytes: &[u8], magic: u32) -> bool {
    bytes.len() >= 4 && u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) == magic
}
