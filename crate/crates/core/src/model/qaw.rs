//! QAW1 named-tensor container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "QAW1"
//! count      u32
//! per tensor:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32
//!   dims     rank × u64
//!   data     product(dims) × f32, row-major
//! ```

use std::io::Write;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QAW1";

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Option<std::result::Result<RawTensor, Error>> {
        let name_len = self.u32()? as usize;
        let name = match std::str::from_utf8(self.take(name_len)?) {
            Ok(s) => s.to_owned(),
            Err(_) => {
                return Some(Err(Error::Truncated {
                    what: "a tensor name (invalid UTF-8)".into(),
                }))
            }
        };
        let rank = self.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(usize::try_from(self.u64()?).ok()?);
        }
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))?;
        let bytes = self.take(numel.checked_mul(4)?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Some(Ok(RawTensor { name, dims, data }))
    }
}

/// Parse a QAW1 buffer. A file that ends before the declared number of
/// tensors is reported as [`Error::BadTensorCount`] with the number of
/// complete tensors found.
pub fn read(buf: &[u8]) -> Result<Vec<RawTensor>> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4).ok_or(Error::Truncated { what: "magic".into() })?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            found: magic.try_into().unwrap(),
        });
    }
    let count = r.u32().ok_or(Error::Truncated {
        what: "tensor count".into(),
    })? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        match r.tensor() {
            Some(t) => tensors.push(t?),
            None => {
                return Err(Error::BadTensorCount {
                    expected: count,
                    found: tensors.len(),
                })
            }
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Truncated {
            what: format!(
                "end of file ({} trailing bytes after {count} tensors)",
                buf.len() - r.pos
            ),
        });
    }
    Ok(tensors)
}

pub fn write<W: Write>(w: &mut W, tensors: &[(&str, &[usize], &[f32])]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, dims, data) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in *dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in *data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
