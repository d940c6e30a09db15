//! `.ttn` tensor container.
//!
//! Single sample: `"TTN1"`, u32 d, d x u32 dims, prod(dims) x f64, all
//! little-endian, values first index fastest. Multi-sample: u32 M followed by
//! M single-sample records.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"TTN1";

pub fn encode_tensor(t: &DenseTensor, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// One tensor as a single-sample record, several with the count prefix.
pub fn encode(samples: &[DenseTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    if samples.len() != 1 {
        out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    }
    for t in samples {
        encode_tensor(t, &mut out);
    }
    out
}

/// Always writes the count prefix, even for one sample.
pub fn encode_multi(samples: &[DenseTensor]) -> Vec<u8> {
    let mut out = (samples.len() as u32).to_le_bytes().to_vec();
    for t in samples {
        encode_tensor(t, &mut out);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated .ttn data at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self) -> Result<DenseTensor> {
        if self.take(4)? != MAGIC {
            return Err(Error::format("missing TTN1 magic"));
        }
        let d = self.u32()? as usize;
        if d == 0 || d > 64 {
            return Err(Error::format(format!("implausible tensor order {d}")));
        }
        let dims = (0..d).map(|_| self.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::format(format!("dims {dims:?} exceed the remaining payload")))?;
        let raw = self.take(8 * n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        DenseTensor::new(dims, data).map_err(|e| Error::format(e.to_string()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<DenseTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    let out = if bytes.starts_with(MAGIC) {
        vec![r.tensor()?]
    } else {
        let m = r.u32()? as usize;
        (0..m).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?
    };
    if r.pos != bytes.len() {
        return Err(Error::format(format!("{} trailing bytes after .ttn data", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn read_ttn(path: impl AsRef<Path>) -> Result<Vec<DenseTensor>> {
    decode(&std::fs::read(path)?)
}

pub fn write_ttn(path: impl AsRef<Path>, samples: &[DenseTensor]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(samples))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_single_record() {
        let t = DenseTensor::new(vec![2, 1], vec![1.0, -0.5]).unwrap();
        let bytes = encode(std::slice::from_ref(&t));
        let mut golden = b"TTN1".to_vec();
        golden.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        golden.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
        golden.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xe0, 0xbf]);
        assert_eq!(bytes, golden);
        assert_eq!(decode(&bytes).unwrap(), vec![t]);
    }

    #[test]
    fn multi_round_trip() {
        let a = DenseTensor::from_fn(vec![2, 3, 2], |i| (i[0] + 2 * i[1]) as f64 + 0.1 * i[2] as f64).unwrap();
        let b = DenseTensor::new(vec![3], vec![f64::MIN_POSITIVE, -0.0, 1e300]).unwrap();
        let bytes = encode(&[a.clone(), b.clone()]);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], a);
        assert_eq!(back[1].data()[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(decode(&encode_multi(std::slice::from_ref(&a))).unwrap(), vec![a]);
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let t = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let bytes = encode(&[t]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut huge = b"TTN1".to_vec();
        huge.extend_from_slice(&[1, 0, 0, 0, 0xff, 0xff, 0xff, 0xff]);
        assert!(decode(&huge).is_err());
    }
}
