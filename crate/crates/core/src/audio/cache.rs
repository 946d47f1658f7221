//! On-disk spectrogram cache.
//!
//! Layout, little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `DSSG`                   |
//! | 4      | 4    | format version (u32, = 1)      |
//! | 8      | 4    | rows = frequency bins (u32)    |
//! | 12     | 4    | cols = time frames (u32)       |
//! | 16     | 4·rows·cols | values, f32, row-major  |

use std::path::Path;

use super::Spectrogram;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DSSG";
const VERSION: u32 = 1;

pub fn encode(spec: &Spectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * spec.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.freq_bins as u32).to_le_bytes());
    out.extend_from_slice(&(spec.time_frames as u32).to_le_bytes());
    for &v in &spec.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Spectrogram> {
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::InvalidInput("not a spectrogram cache file".into()));
    }
    if word(4) != VERSION {
        return Err(Error::InvalidInput(format!("unsupported cache version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    if bytes.len() != 16 + 4 * rows * cols {
        return Err(Error::InvalidInput(format!(
            "cache body holds {} bytes, header promises {rows}x{cols}",
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Spectrogram {
        values,
        freq_bins: rows,
        time_frames: cols,
    })
}

pub fn write(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(spec)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
