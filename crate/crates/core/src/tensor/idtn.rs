//! The `IDTN` raw tensor file format.
//!
//! Layout, all little-endian: magic `b"IDTN"`, `u16` version (= 1), `u16`
//! rank, `rank` x `u32` dimensions, then row-major `f32` data.

use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IDTN";
const VERSION: u16 = 1;

pub fn encode_idtn(tensor: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * tensor.rank() + 4 * tensor.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensor.rank() as u16).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes one IDTN blob from the front of `bytes`, returning the tensor and
/// the number of bytes consumed.
pub fn decode_idtn(bytes: &[u8]) -> Result<(Tensor<f32>, usize)> {
    decode_at(bytes, 0)
}

pub(crate) fn decode_at(bytes: &[u8], base: usize) -> Result<(Tensor<f32>, usize)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let parse_err = |offset: usize, message: String| Error::Parse {
        offset: base + offset,
        message,
    };
    let magic = cur.take(4, "magic").map_err(|e| rebase(e, base))?;
    if magic != MAGIC {
        return Err(parse_err(0, format!("bad magic {magic:?}, expected \"IDTN\"")));
    }
    let version = cur.u16("version").map_err(|e| rebase(e, base))?;
    if version != VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let rank = cur.u16("rank").map_err(|e| rebase(e, base))? as usize;
    if rank == 0 {
        return Err(parse_err(6, "rank must be positive".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = cur.pos;
        let d = cur.u32("dimension").map_err(|e| rebase(e, base))? as usize;
        if d == 0 {
            return Err(parse_err(at, "zero-sized dimension".into()));
        }
        shape.push(d);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(8, format!("shape {shape:?} overflows")))?;
    let body = cur
        .take(numel.saturating_mul(4), "tensor data")
        .map_err(|e| rebase(e, base))?;
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((Tensor::new(shape, data)?, cur.pos))
}

fn rebase(e: Error, base: usize) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse {
            offset: offset + base,
            message,
        },
        other => other,
    }
}

pub fn write_idtn(tensor: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_idtn(tensor))
        .map_err(|e| Error::io(path, e))
}

/// Reads a whole file holding exactly one IDTN tensor.
pub fn read_idtn(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let (t, used) = decode_idtn(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Parse {
            offset: used,
            message: format!("{} trailing bytes", bytes.len() - used),
        });
    }
    Ok(t)
}
