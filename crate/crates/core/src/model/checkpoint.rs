//! Checkpoint container: `u32` entry count, then per entry a `u16` name
//! length, the UTF-8 name, and one IDTN blob. All integers little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::tensor::{encode_idtn, Tensor};

pub fn encode_checkpoint(params: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&encode_idtn(&p.tensor));
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let truncated = |offset: usize, what: &str| Error::Parse {
        offset,
        message: format!("truncated {what}"),
    };
    let mut pos = 0usize;
    let count_bytes = bytes.get(0..4).ok_or_else(|| truncated(0, "entry count"))?;
    let count = u32::from_le_bytes(count_bytes.try_into().expect("4 bytes")) as usize;
    pos += 4;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len_bytes = bytes.get(pos..pos + 2).ok_or_else(|| truncated(pos, "name length"))?;
        let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
        pos += 2;
        let name_bytes = bytes.get(pos..pos + len).ok_or_else(|| truncated(pos, "name"))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|e| Error::Parse {
                offset: pos,
                message: format!("name is not UTF-8: {e}"),
            })?
            .to_string();
        pos += len;
        let (t, used) = crate::tensor::idtn::decode_at(&bytes[pos..], pos)?;
        pos += used;
        entries.push((name, t));
    }
    if pos != bytes.len() {
        return Err(Error::Parse {
            offset: pos,
            message: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    Ok(entries)
}

pub fn save_checkpoint(params: &ParamStore<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
