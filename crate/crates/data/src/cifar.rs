//! CIFAR-10 binary batches.
//!
//! Each file is a sequence of 3073-byte records: one label byte followed by
//! 3072 pixel bytes, stored as the red plane, then green, then blue, each a
//! row-major 32×32 image.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::{Error, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const PIXELS: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_LEN: usize = 1 + PIXELS;
pub const N_CLASSES: usize = 10;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

/// One raw record, kept byte-for-byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CifarRecord {
    pub label: u8,
    pub pixels: Vec<u8>,
}

impl CifarRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_LEN);
        out.push(self.label);
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Parses a whole batch file. `name` is only used in error messages.
pub fn parse_records(bytes: &[u8], name: &str) -> Result<Vec<CifarRecord>> {
    if bytes.is_empty() {
        return Err(Error::Format(format!("{name}: empty file")));
    }
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let offset = bytes.len() - bytes.len() % RECORD_LEN;
        return Err(Error::Format(format!(
            "{name}: truncated record at byte offset {offset} ({} bytes is not a multiple of {RECORD_LEN})",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] as usize >= N_CLASSES {
                return Err(Error::Format(format!(
                    "{name}: label {} at byte offset {} is not a CIFAR-10 class",
                    rec[0],
                    i * RECORD_LEN
                )));
            }
            Ok(CifarRecord {
                label: rec[0],
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<CifarRecord>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(&bytes, &path.display().to_string())
}

/// Per-channel standardization applied after scaling pixels to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalization {
    /// Channel statistics of a record set.
    pub fn fit(records: &[CifarRecord]) -> Normalization {
        let plane = SIDE * SIDE;
        let n = (records.len() * plane) as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for c in 0..CHANNELS {
            let (mut sum, mut sq) = (0.0, 0.0);
            for r in records {
                for &p in &r.pixels[c * plane..(c + 1) * plane] {
                    let v = p as f64 / 255.0;
                    sum += v;
                    sq += v * v;
                }
            }
            mean[c] = sum / n;
            std[c] = (sq / n - mean[c] * mean[c]).max(0.0).sqrt().max(1e-12);
        }
        Normalization { mean, std }
    }

    fn apply(&self, records: &[CifarRecord], split: Split) -> Result<Dataset> {
        let plane = SIDE * SIDE;
        let mut inputs = Vec::with_capacity(records.len() * PIXELS);
        for r in records {
            for (i, &p) in r.pixels.iter().enumerate() {
                let c = i / plane;
                inputs.push((p as f64 / 255.0 - self.mean[c]) / self.std[c]);
            }
        }
        let labels = records.iter().map(|r| r.label as usize).collect();
        Dataset::new(inputs, vec![CHANNELS, SIDE, SIDE], labels, N_CLASSES, split)
    }
}

/// Loads the five training batches and the test batch from `dir`.
///
/// With `norm = None` the statistics are fitted on the training split; the
/// constants actually used are returned either way.
pub fn load_cifar10(
    dir: &Path,
    norm: Option<Normalization>,
) -> Result<(Dataset, Dataset, Normalization)> {
    let mut train = Vec::new();
    for name in TRAIN_FILES {
        train.extend(read_file(dir, name)?);
    }
    let test = read_file(dir, TEST_FILE)?;
    let norm = norm.unwrap_or_else(|| Normalization::fit(&train));
    Ok((
        norm.apply(&train, Split::Train)?,
        norm.apply(&test, Split::Test)?,
        norm,
    ))
}
