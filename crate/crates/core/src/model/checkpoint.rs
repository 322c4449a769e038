//! Model checkpoints: one descriptor line followed by the parameters as
//! little-endian `f32`.
//!
//! ```text
//! alexbench-model v1 init_seed=<u64> <architecture descriptor>\n
//! <param_count * 4 bytes>
//! ```
//!
//! Parameters are narrowed to `f32`, so a reloaded model matches the saved
//! one to single precision only.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Architecture, ClassifierModel, ModelError};

const TAG: &str = "alexbench-model v1";

pub fn encode(model: &ClassifierModel) -> Vec<u8> {
    let header = format!(
        "{TAG} init_seed={} {}\n",
        model.init_seed(),
        model.architecture()
    );
    let mut out = Vec::with_capacity(header.len() + model.param_count() * 4);
    out.extend_from_slice(header.as_bytes());
    for &p in model.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ClassifierModel, ModelError> {
    let corrupt = |m: &str| ModelError::CorruptCheckpoint(m.to_string());
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing descriptor line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| corrupt("descriptor is not UTF-8"))?;
    let rest = header
        .strip_prefix(TAG)
        .ok_or_else(|| corrupt("unknown checkpoint tag"))?
        .trim_start();
    let (seed_tok, arch_str) = rest
        .split_once(' ')
        .ok_or_else(|| corrupt("truncated descriptor"))?;
    let init_seed: u64 = seed_tok
        .strip_prefix("init_seed=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| corrupt("bad init_seed"))?;
    let arch: Architecture = arch_str.parse()?;
    let blob = &bytes[newline + 1..];
    if blob.len() != arch.param_count() * 4 {
        return Err(corrupt(&format!(
            "expected {} parameter bytes, found {}",
            arch.param_count() * 4,
            blob.len()
        )));
    }
    let params = blob
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    ClassifierModel::from_params(arch, params, init_seed)
}

pub fn save(model: &ClassifierModel, path: &Path) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&encode(model))?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ClassifierModel, ModelError> {
    decode(&fs::read(path)?)
}
