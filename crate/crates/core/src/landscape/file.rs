//! Binary dataset file.
//!
//! Layout (little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `MCTL`                              |
//! | 4      | 4    | u32 version (1)                           |
//! | 8      | 8    | u64 metadata length `m`                   |
//! | 16     | m    | UTF-8 JSON metadata                       |
//! | 16+m   | ...  | f64 pixels, landscape by landscape in time order |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Landscape, LandscapeDataset, MeshSpec};
use crate::dynamics::{build_problem, ModelId};
use crate::error::{MctError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"MCTL";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;
const FLATTENING_ORDER: &str = "last-fastest";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMetadata {
    model_id: ModelId,
    delta: f64,
    delta_a: f64,
    delta_b: f64,
    n_ts: usize,
    mesh: MeshSpec,
    times: Vec<f64>,
    seed: u64,
    flattening_order: String,
    /// `[re, im]` pairs.
    initial_state: Vec<[f64; 2]>,
    target_state: Vec<[f64; 2]>,
}

fn encode_state(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn decode_state(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

pub fn write_dataset<W: Write>(dataset: &LandscapeDataset, mut out: W) -> std::io::Result<()> {
    let p = &dataset.problem;
    let meta = DatasetMetadata {
        model_id: p.model_id,
        delta: p.delta,
        delta_a: p.delta_a,
        delta_b: p.delta_b,
        n_ts: dataset.mesh.n_segments(),
        mesh: dataset.mesh.clone(),
        times: dataset.times.clone(),
        seed: dataset.seed,
        flattening_order: FLATTENING_ORDER.to_string(),
        initial_state: encode_state(&p.initial_state),
        target_state: encode_state(&p.target_state),
    };
    let meta = serde_json::to_vec(&meta).map_err(std::io::Error::other)?;
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    for l in &dataset.landscapes {
        for &px in &l.pixels {
            out.write_all(&px.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn save_dataset(dataset: &LandscapeDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| MctError::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| MctError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<LandscapeDataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MctError::io(path, e))?;
    read_dataset(&bytes)
}

fn format_err(offset: u64, message: impl Into<String>) -> MctError {
    MctError::Format {
        offset,
        message: message.into(),
    }
}

/// Parses a complete dataset file image. Nothing is returned unless the
/// whole image is consistent.
pub fn read_dataset(bytes: &[u8]) -> Result<LandscapeDataset> {
    if bytes.len() < HEADER_LEN as usize {
        return Err(format_err(bytes.len() as u64, "file shorter than the 16-byte header"));
    }
    if &bytes[0..4] != DATASET_MAGIC {
        return Err(format_err(0, "bad magic, expected \"MCTL\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(MctError::UnsupportedVersion {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let meta_end = HEADER_LEN
        .checked_add(meta_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| format_err(8, format!("metadata length {meta_len} runs past end of file")))?;
    let meta: DatasetMetadata = serde_json::from_slice(&bytes[HEADER_LEN as usize..meta_end as usize])
        .map_err(|e| format_err(HEADER_LEN, format!("invalid metadata: {e}")))?;
    if meta.flattening_order != FLATTENING_ORDER {
        return Err(format_err(
            HEADER_LEN,
            format!("unknown flattening order {:?}", meta.flattening_order),
        ));
    }
    meta.mesh
        .validate()
        .map_err(|e| format_err(HEADER_LEN, e.to_string()))?;
    if meta.n_ts != meta.mesh.n_segments() {
        return Err(format_err(HEADER_LEN, "n_ts disagrees with mesh axes"));
    }

    let pixels = meta.mesh.pixel_count();
    let expected = (meta.times.len() as u64)
        .checked_mul(pixels as u64)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| format_err(HEADER_LEN, "pixel payload size overflows"))?;
    let available = bytes.len() as u64 - meta_end;
    if available < expected {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated pixel data: expected {expected} bytes after offset {meta_end}, found {available}"),
        ));
    }
    if available > expected {
        return Err(format_err(meta_end + expected, "trailing bytes after pixel data"));
    }

    let mut problem = build_problem(meta.model_id, meta.delta, meta.delta_a, meta.delta_b)
        .map_err(|e| format_err(HEADER_LEN, e.to_string()))?;
    let (initial, target) = (decode_state(&meta.initial_state), decode_state(&meta.target_state));
    if initial.len() != problem.dim() || target.len() != problem.dim() {
        return Err(format_err(HEADER_LEN, "state vector dimension mismatch"));
    }
    problem.initial_state = initial;
    problem.target_state = target;

    let mut cursor = meta_end as usize;
    let mut landscapes = Vec::with_capacity(meta.times.len());
    for &t in &meta.times {
        let chunk = &bytes[cursor..cursor + pixels * 8];
        let px: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        cursor += pixels * 8;
        landscapes.push(Landscape {
            total_time: t,
            mesh: meta.mesh.clone(),
            pixels: px,
        });
    }
    LandscapeDataset::from_landscapes(problem, meta.mesh, landscapes, meta.seed)
        .map_err(|e| format_err(HEADER_LEN, e.to_string()))
}
