//! Model files.
//!
//! Layout: `"KSTM"`, u32 LE version, u32 LE header length, JSON header,
//! u64 LE blob length, blob of f64 LE values, u32 LE CRC-32 over every byte
//! after the version field and before the checksum. Cores are stored once in
//! a table; trains refer to them by index, so shared cores stay shared after
//! loading.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::pipeline::{GridPoint, OvoModel, SvmModel};
use crate::tensor::DenseTensor;
use crate::tt::{StackedBasis, TensorTrain};

pub const MAGIC: &[u8; 4] = b"KSTM";
pub const VERSION: u32 = 1;

/// Provenance recorded next to the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Factor applied to raw inputs before training (1/255 for IDX pixels).
    pub input_scale: f64,
    pub seed: Option<u64>,
}

impl Default for ModelMeta {
    fn default() -> Self {
        Self {
            input_scale: 1.0,
            seed: None,
        }
    }
}

/// `len` f64 values starting at value index `offset` of the blob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Span {
    offset: usize,
    len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CoreEntry {
    dims: Vec<usize>,
    span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PairHeader {
    classes: [u32; 2],
    spec: KernelSpec,
    point: GridPoint,
    validation_accuracy: f64,
    normalize: bool,
    basis_head: usize,
    basis_tail: Vec<usize>,
    support: Vec<Vec<usize>>,
    coef: Span,
    bias: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    classes: Vec<u32>,
    dims: Vec<usize>,
    meta: ModelMeta,
    cores: Vec<CoreEntry>,
    pairs: Vec<PairHeader>,
}

#[derive(Default)]
struct BlobWriter {
    values: Vec<f64>,
    cores: Vec<CoreEntry>,
    seen: HashMap<*const DenseTensor, usize>,
}

impl BlobWriter {
    fn push(&mut self, vals: &[f64]) -> Span {
        let span = Span {
            offset: self.values.len(),
            len: vals.len(),
        };
        self.values.extend_from_slice(vals);
        span
    }

    fn core(&mut self, c: &Arc<DenseTensor>) -> usize {
        let key = Arc::as_ptr(c);
        if let Some(&i) = self.seen.get(&key) {
            return i;
        }
        let span = self.push(c.data());
        self.cores.push(CoreEntry {
            dims: c.dims().to_vec(),
            span,
        });
        let i = self.cores.len() - 1;
        self.seen.insert(key, i);
        i
    }
}

pub fn to_bytes(model: &OvoModel, meta: &ModelMeta) -> Result<Vec<u8>> {
    let first = model
        .pairs
        .first()
        .ok_or_else(|| Error::arg("model has no pair classifiers"))?;
    let mut w = BlobWriter::default();
    let mut pairs = Vec::with_capacity(model.pairs.len());
    for m in &model.pairs {
        let basis_head = w.core(m.basis.head());
        let basis_tail = m.basis.tail().iter().map(|c| w.core(c)).collect();
        let support = m
            .support
            .iter()
            .map(|tt| tt.cores().iter().map(|c| w.core(c)).collect())
            .collect();
        let coef = w.push(&m.coef);
        let bias = w.push(&[m.bias]);
        pairs.push(PairHeader {
            classes: m.classes,
            spec: m.spec.clone(),
            point: m.point.clone(),
            validation_accuracy: m.validation_accuracy,
            normalize: m.normalize,
            basis_head,
            basis_tail,
            support,
            coef,
            bias,
        });
    }
    let header = Header {
        classes: model.classes.clone(),
        dims: first.dims().to_vec(),
        meta: meta.clone(),
        cores: w.cores,
        pairs,
    };
    let header_bytes = crate::io::fmt::to_json(&header)?.into_bytes();
    let mut out = Vec::with_capacity(24 + header_bytes.len() + 8 * w.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&((8 * w.values.len()) as u64).to_le_bytes());
    for v in &w.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[8..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(OvoModel, ModelMeta)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a model file (missing KSTM magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Version(version));
    }
    if bytes.len() < 8 + 4 + 8 + 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(&bytes[8..]),
        });
    }
    let body = &bytes[8..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let hlen = u32::from_le_bytes(body[..4].try_into().expect("4 bytes")) as usize;
    let rest = &body[4..];
    if rest.len() < hlen + 8 {
        return Err(Error::format("header length exceeds file size"));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen])?;
    let blob_len = u64::from_le_bytes(rest[hlen..hlen + 8].try_into().expect("8 bytes")) as usize;
    let blob = &rest[hlen + 8..];
    if blob.len() != blob_len || !blob_len.is_multiple_of(8) {
        return Err(Error::format(format!(
            "blob holds {} bytes, header declares {blob_len}",
            blob.len()
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let slice = |s: Span| -> Result<&[f64]> {
        values
            .get(s.offset..s.offset.saturating_add(s.len))
            .ok_or_else(|| Error::format(format!("blob span {}..+{} out of range", s.offset, s.len)))
    };

    let cores: Vec<Arc<DenseTensor>> = header
        .cores
        .iter()
        .map(|c| {
            DenseTensor::new(c.dims.clone(), slice(c.span)?.to_vec())
                .map(Arc::new)
                .map_err(|e| Error::format(e.to_string()))
        })
        .collect::<Result<_>>()?;
    let core = |i: usize| -> Result<Arc<DenseTensor>> {
        cores
            .get(i)
            .cloned()
            .ok_or_else(|| Error::format(format!("core index {i} out of range")))
    };

    let mut pairs = Vec::with_capacity(header.pairs.len());
    for p in &header.pairs {
        let tail = p.basis_tail.iter().map(|&i| core(i)).collect::<Result<Vec<_>>>()?;
        let basis = StackedBasis::from_parts(core(p.basis_head)?, tail).map_err(|e| Error::format(e.to_string()))?;
        let support = p
            .support
            .iter()
            .map(|ids| {
                let cs = ids.iter().map(|&i| core(i)).collect::<Result<Vec<_>>>()?;
                TensorTrain::from_shared(cs).map_err(|e| Error::format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let coef = slice(p.coef)?.to_vec();
        if coef.len() != support.len() {
            return Err(Error::format("coefficient count differs from support count"));
        }
        let bias = *slice(p.bias)?
            .first()
            .ok_or_else(|| Error::format("missing bias value"))?;
        pairs.push(SvmModel {
            basis,
            support,
            coef,
            bias,
            spec: p.spec.clone(),
            point: p.point.clone(),
            validation_accuracy: p.validation_accuracy,
            classes: p.classes,
            normalize: p.normalize,
            solution: None,
        });
    }
    Ok((
        OvoModel {
            classes: header.classes,
            pairs,
        },
        header.meta,
    ))
}

pub fn save_model(path: impl AsRef<Path>, model: &OvoModel, meta: &ModelMeta) -> Result<()> {
    std::fs::write(path, to_bytes(model, meta)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(OvoModel, ModelMeta)> {
    from_bytes(&std::fs::read(path)?)
}
