//! Generator checkpoints: magic `FQTC`, u16 version, u64 |θ|, u64 |β|,
//! then θ and β as little-endian f64.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use fqt_core::fed::GlobalParams;

pub const MAGIC: &[u8; 4] = b"FQTC";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

pub fn encode(params: &GlobalParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (params.theta.len() + params.beta.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.theta.len() as u64).to_le_bytes());
    out.extend_from_slice(&(params.beta.len() as u64).to_le_bytes());
    for v in params.theta.iter().chain(&params.beta) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> anyhow::Result<GlobalParams> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        bail!("not an FQTC checkpoint");
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        bail!("unsupported checkpoint version {version}");
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (nt, nb) = (word(6), word(14));
    let body = &bytes[HEADER_LEN..];
    let expected = nt.checked_add(nb).and_then(|n| n.checked_mul(8));
    if expected != Some(body.len()) {
        bail!(
            "shape error: header declares {nt} + {nb} values, body holds {} bytes",
            body.len()
        );
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(GlobalParams {
        theta: values[..nt].to_vec(),
        beta: values[nt..].to_vec(),
    })
}

pub fn save(path: &Path, params: &GlobalParams) -> anyhow::Result<()> {
    fs::write(path, encode(params)).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> anyhow::Result<GlobalParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| path.display().to_string())
}

pub fn file_name(round: usize) -> String {
    format!("round_{round:04}.fqtc")
}
