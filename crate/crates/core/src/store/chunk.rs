//! One tensor per file.
//!
//! Layout (little endian): `AKCH`, version u8, dtype u8, compression u8,
//! ndim u8, `ndim` u64 dims, raw payload length u64, crc32 of the raw
//! payload u32, stored body length u64, then the body (deflated or raw).
//! The explicit body length makes every truncation detectable, including
//! that of an empty tensor's deflate stream.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{element_count, DType, Tensor};

pub const MAGIC: &[u8; 4] = b"AKCH";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    None,
    #[default]
    Deflate,
}

fn dtype_code(d: DType) -> u8 {
    match d {
        DType::F32 => 0,
        DType::I64 => 1,
        DType::U8 => 2,
    }
}

fn code_dtype(c: u8) -> Option<DType> {
    match c {
        0 => Some(DType::F32),
        1 => Some(DType::I64),
        2 => Some(DType::U8),
        _ => None,
    }
}

pub fn encode(t: &Tensor, compression: Compression) -> Result<Vec<u8>> {
    let raw = t.to_le_bytes();
    let mut out = Vec::with_capacity(32 + raw.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype_code(t.dtype()));
    out.push(match compression {
        Compression::None => 0,
        Compression::Deflate => 1,
    });
    let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::Schema("more than 255 dimensions".into()))?;
    out.push(ndim);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&raw).to_le_bytes());
    let body = match compression {
        Compression::None => raw,
        Compression::Deflate => {
            let mut enc = DeflateEncoder::new(Vec::new(), flate2::Compression::fast());
            enc.write_all(&raw)?;
            enc.finish()?
        }
    };
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("header truncated at byte {}", self.bytes.len()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a chunk; the error is a human-readable diagnosis.
pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = c.take(1)?[0];
    if version != VERSION {
        return Err(format!("chunk version {version}"));
    }
    let dtype = code_dtype(c.take(1)?[0]).ok_or("unknown dtype code")?;
    let compression = c.take(1)?[0];
    let ndim = c.take(1)?[0] as usize;
    let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
    let raw_len = c.u64()? as usize;
    let crc = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if shape.iter().try_fold(dtype.size(), |acc, &d| acc.checked_mul(d)) != Some(raw_len) {
        return Err(format!("payload length {raw_len} does not match shape {shape:?}"));
    }
    let body_len = c.u64()? as usize;
    let body = &bytes[c.at..];
    if body.len() != body_len {
        return Err(format!("body has {} of {body_len} bytes", body.len()));
    }
    let raw = match compression {
        0 => body.to_vec(),
        1 => {
            let mut raw = Vec::with_capacity(raw_len);
            DeflateDecoder::new(body).read_to_end(&mut raw).map_err(|e| format!("deflate stream: {e}"))?;
            raw
        }
        other => return Err(format!("unknown compression code {other}")),
    };
    if raw.len() != raw_len {
        return Err(format!("payload truncated ({} of {raw_len} bytes)", raw.len()));
    }
    if crc32fast::hash(&raw) != crc {
        return Err("checksum mismatch".into());
    }
    debug_assert_eq!(element_count(&shape) * dtype.size(), raw.len());
    Tensor::from_le_bytes(dtype, shape, &raw).map_err(|e| e.to_string())
}

/// Writes `bytes` to a sibling temp file, syncs it, then renames it over `path`.
/// Writes through a temporary file and a rename, so readers see either the
/// old contents or the new ones. `sync` adds an fsync before the rename.
pub fn write_atomic(path: &Path, bytes: &[u8], sync: bool) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = File::create(tmp)?;
        f.write_all(bytes)?;
        if sync {
            f.sync_all()?;
        }
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn read(path: &Path) -> std::result::Result<Tensor, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor {
        Tensor::from_f32(vec![3, 2], vec![0.0, -1.5, f32::NAN, 4.0, 1e-30, 7.0]).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        for c in [Compression::None, Compression::Deflate] {
            let t = sample();
            let back = decode(&encode(&t, c).unwrap()).unwrap();
            assert_eq!(back.shape(), t.shape());
            assert_eq!(back.to_le_bytes(), t.to_le_bytes());
        }
    }

    #[test]
    fn every_truncation_is_detected() {
        for c in [Compression::None, Compression::Deflate] {
            let bytes = encode(&sample(), c).unwrap();
            for cut in 0..bytes.len() {
                assert!(decode(&bytes[..cut]).is_err(), "cut at {cut} accepted");
            }
            let empty = encode(&Tensor::zeros(DType::U8, vec![0, 4]), c).unwrap();
            for cut in 0..empty.len() {
                assert!(decode(&empty[..cut]).is_err(), "cut at {cut} accepted");
            }
        }
    }

    #[test]
    fn flipped_payload_fails_the_checksum() {
        let mut bytes = encode(&sample(), Compression::None).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        assert_eq!(decode(&bytes).unwrap_err(), "checksum mismatch");
    }
}
