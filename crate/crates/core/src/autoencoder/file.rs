//! Binary network file: magic `MCTN`, u32 version, u64 metadata length,
//! JSON metadata, then L1w, L1b, L2w, L2b, L3w, L3b, L4w, L4b as
//! little-endian f64. Weight matrices are `fan_in x fan_out`, row-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, NetworkParams, TrainConfig, TrainReport};
use crate::error::{MctError, Result};

pub const NETWORK_MAGIC: &[u8; 4] = b"MCTN";
pub const NETWORK_VERSION: u32 = 1;
const WEIGHT_LAYOUT: &str = "fan_in-by-fan_out";

/// A trained member as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFile {
    pub params: NetworkParams,
    pub config: TrainConfig,
    pub report: TrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkMetadata {
    spec: ArchitectureSpec,
    config: TrainConfig,
    seed: u64,
    weight_layout: String,
    final_train_loss: Option<f64>,
    final_train_mse: Option<f64>,
    final_val_loss: Option<f64>,
    report: TrainReport,
}

pub fn write_network<W: Write>(net: &NetworkFile, mut out: W) -> std::io::Result<()> {
    let meta = NetworkMetadata {
        spec: net.params.spec,
        config: net.config.clone(),
        seed: net.config.seed,
        weight_layout: WEIGHT_LAYOUT.into(),
        final_train_loss: net.report.train_loss.last().copied(),
        final_train_mse: net.report.train_mse.last().copied(),
        final_val_loss: net.report.val_loss.last().copied(),
        report: net.report.clone(),
    };
    let meta = serde_json::to_vec(&meta).map_err(std::io::Error::other)?;
    out.write_all(NETWORK_MAGIC)?;
    out.write_all(&NETWORK_VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    for t in net.params.tensors() {
        for &x in t {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn save_network(net: &NetworkFile, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| MctError::io(path, e))?;
    write_network(net, BufWriter::new(file)).map_err(|e| MctError::io(path, e))
}

pub fn load_network(path: &Path) -> Result<NetworkFile> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MctError::io(path, e))?;
    read_network(&bytes)
}

fn format_err(offset: u64, message: impl Into<String>) -> MctError {
    MctError::Format {
        offset,
        message: message.into(),
    }
}

pub fn read_network(bytes: &[u8]) -> Result<NetworkFile> {
    if bytes.len() < 16 {
        return Err(format_err(bytes.len() as u64, "file shorter than the 16-byte header"));
    }
    if &bytes[0..4] != NETWORK_MAGIC {
        return Err(format_err(0, "bad magic, expected \"MCTN\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != NETWORK_VERSION {
        return Err(MctError::UnsupportedVersion {
            found: version,
            expected: NETWORK_VERSION,
        });
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let meta_end = 16u64
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| format_err(8, format!("metadata length {meta_len} runs past end of file")))?
        as usize;
    let meta: NetworkMetadata =
        serde_json::from_slice(&bytes[16..meta_end]).map_err(|e| format_err(16, format!("invalid metadata: {e}")))?;
    if meta.weight_layout != WEIGHT_LAYOUT {
        return Err(format_err(
            16,
            format!("unknown weight layout {:?}", meta.weight_layout),
        ));
    }
    meta.spec.validate().map_err(|e| format_err(16, e.to_string()))?;

    let mut params = NetworkParams::zeros(meta.spec);
    let expected: usize = params.parameter_count() * 8;
    let available = bytes.len() - meta_end;
    if available != expected {
        return Err(format_err(
            bytes.len() as u64,
            format!("expected {expected} bytes of weights after offset {meta_end}, found {available}"),
        ));
    }
    let mut cursor = meta_end;
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
        }
    }
    Ok(NetworkFile {
        params,
        config: meta.config,
        report: meta.report,
    })
}
