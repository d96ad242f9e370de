//! FQTW weight files.
//!
//! ```text
//! offset  size   field
//! 0       4      magic "FQTW"
//! 4       2      format version, u16 little-endian (currently 1)
//! 6       8      m, u64 little-endian
//! 14      4·m    weights, IEEE-754 binary32 little-endian, packing order of
//!                the target model
//! ```
//!
//! Readers need nothing but the target architecture to run inference.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FQTW";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8;

/// Rounds each weight to the precision stored on disk.
pub fn quantize(omega: &[f64]) -> Vec<f64> {
    omega.iter().map(|&w| w as f32 as f64).collect()
}

pub fn encode(omega: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * omega.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(omega.len() as u64).to_le_bytes());
    for &w in omega {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "weight file has {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"FQTW\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported FQTW version {version}")));
    }
    let m = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) != m.saturating_mul(4) {
        return Err(Error::Format(format!(
            "header declares {m} weights but payload holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

pub fn save(path: &Path, omega: &[f64]) -> Result<()> {
    fs::write(path, encode(omega))?;
    Ok(())
}

/// Loads a weight file and checks it holds exactly `expected` weights.
pub fn load(path: &Path, expected: Option<usize>) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    let omega = decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(m) = expected {
        if omega.len() != m {
            return Err(Error::Format(format!(
                "{}: model expects m = {m} weights, file holds {}",
                path.display(),
                omega.len()
            )));
        }
    }
    Ok(omega)
}
