//! Binary formats: parameter checkpoints (`FVSRCKPT`) and raw clip dumps
//! (`FVSRTENS`). Everything is little-endian.
//!
//! Checkpoint layout:
//!
//! | bytes   | field                              |
//! |---------|------------------------------------|
//! | 0..8    | magic `FVSRCKPT`                   |
//! | 8..12   | format version, u32 = 1            |
//! | 12..16  | reserved, zero                     |
//! | 16..24  | parameter count, u64               |
//! | 24..    | count × f64                        |
//!
//! Clip layout: magic `FVSRTENS`, version u32 = 1, then T, H, W, C as u32,
//! then the row-major f64 data.

use crate::error::{FedVsrError, Result};
use crate::media::{Dims, ParamVector, VideoTensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FVSRCKPT";
pub const TENSOR_MAGIC: &[u8; 8] = b"FVSRTENS";
pub const FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_HEADER_LEN: usize = 24;
pub const TENSOR_HEADER_LEN: usize = 28;

pub fn serialize_params(p: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + 8 * p.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(p.len() as u64).to_le_bytes());
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Inverse of [`serialize_params`]. The layout id is not stored in the file,
/// so the caller supplies it.
pub fn deserialize_params(bytes: &[u8], layout_id: &str) -> Result<ParamVector> {
    let mut reader = Reader::new(bytes);
    reader.magic(CHECKPOINT_MAGIC)?;
    reader.version()?;
    let reserved_at = reader.pos;
    let reserved = reader.u32()?;
    if reserved != 0 {
        return Err(FedVsrError::Format {
            offset: reserved_at,
            reason: format!("reserved field must be zero, found {reserved}"),
        });
    }
    let count = reader.u64()? as usize;
    let values = reader.f64_payload(count)?;
    reader.finish()?;
    ParamVector::new(values, layout_id).map_err(|e| FedVsrError::Format {
        offset: CHECKPOINT_HEADER_LEN,
        reason: e.to_string(),
    })
}

pub fn serialize_tensor(x: &VideoTensor) -> Vec<u8> {
    let dims = x.dims();
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 8 * x.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in [dims.frames, dims.height, dims.width, dims.channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_tensor(bytes: &[u8]) -> Result<VideoTensor> {
    let mut reader = Reader::new(bytes);
    reader.magic(TENSOR_MAGIC)?;
    reader.version()?;
    let dims = Dims::new(
        reader.u32()? as usize,
        reader.u32()? as usize,
        reader.u32()? as usize,
        reader.u32()? as usize,
    );
    let data = reader.f64_payload(dims.len())?;
    reader.finish()?;
    VideoTensor::new(dims, data).map_err(|e| FedVsrError::Format {
        offset: TENSOR_HEADER_LEN,
        reason: e.to_string(),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(FedVsrError::Format {
                offset: self.pos,
                reason: format!(
                    "truncated {what}: need {n} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let found = self.take(8, "magic")?;
        if found != expected {
            return Err(FedVsrError::Format {
                offset: 0,
                reason: format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(found)
                ),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(FedVsrError::Format {
                offset: at,
                reason: format!("unsupported version {v}, expected {FORMAT_VERSION}"),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4, "u32 field")?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8, "u64 field")?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64_payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let expected = count.checked_mul(8).ok_or_else(|| FedVsrError::Format {
            offset: self.pos,
            reason: format!("declared count {count} overflows"),
        })?;
        let available = self.bytes.len() - self.pos;
        if available < expected {
            return Err(FedVsrError::Format {
                offset: self.pos,
                reason: format!(
                    "payload too short: declared {count} values ({expected} bytes), found {available} bytes"
                ),
            });
        }
        let payload = self.take(expected, "payload")?;
        Ok(payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(FedVsrError::Format {
                offset: self.pos,
                reason: format!(
                    "count mismatch: {} trailing bytes after declared payload",
                    self.bytes.len() - self.pos
                ),
            });
        }
        Ok(())
    }
}
