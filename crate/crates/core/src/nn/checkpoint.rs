//! Binary tensor checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NNCP" | version: u32 | count: u32
//! per tensor: name_len: u16 | name bytes | ndim: u8 | dims: u64 each | data: f64 each
//! crc32 (IEEE) of everything above: u32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NNCP";
const VERSION: u32 = 1;

fn crc32(data: &[u8]) -> u32 {
    let mut crc = !0u32;
    for byte in data {
        crc ^= *byte as u32;
        for _ in 0..8 {
            let low = crc & 1;
            crc >>= 1;
            if low != 0 {
                crc ^= 0xEDB8_8320;
            }
        }
    }
    !crc
}

/// Serializes named tensors to `path`, fully overwriting any existing file.
pub fn save_tensors(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(entries.len())
        .map_err(|_| CoreError::Checkpoint("too many tensors".into()))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in entries {
        let name_len = u16::try_from(name.len())
            .map_err(|_| CoreError::Checkpoint(format!("tensor name '{name}' too long")))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let ndim = u8::try_from(tensor.shape().len())
            .map_err(|_| CoreError::Checkpoint("tensor rank too large".into()))?;
        buf.push(ndim);
        for d in tensor.shape() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf).map_err(|e| CoreError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CoreError::Checkpoint("file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Reads a checkpoint written by [`save_tensors`], verifying the checksum
/// before trusting any field.
pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let buf = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if buf.len() < MAGIC.len() + 4 + 4 + 4 {
        return Err(CoreError::Checkpoint("file too short".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    let actual_crc = crc32(body);
    if stored_crc != actual_crc {
        return Err(CoreError::Checkpoint(format!(
            "checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CoreError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CoreError::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = r.u64()? as usize;
            len = len
                .checked_mul(d)
                .ok_or_else(|| CoreError::Checkpoint("tensor dimensions overflow".into()))?;
            shape.push(d);
        }
        let mut data = Vec::with_capacity(len);
        for chunk in r.take(len * 8)?.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| CoreError::Checkpoint(format!("tensor '{name}': {e}")))?;
        entries.push((name, tensor));
    }
    if r.pos != body.len() {
        return Err(CoreError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(entries)
}
