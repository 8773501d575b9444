//! Checkpoint file: one JSON manifest line, a newline, then every tensor as
//! little-endian `f32` in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use dictdis_core::data::Vocabulary;
use dictdis_core::model::{ModelConfig, Parameters};
use dictdis_core::tensor::Matrix;
use dictdis_core::training::{TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files::{vocab_fingerprint, write_atomic};

pub const FORMAT: &str = "dictdis-checkpoint";
pub const VERSION: u32 = 1;
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub step: u64,
    pub smoothed_loss: Option<f64>,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub vocab_sha256: String,
    pub vocab: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint. `state` holds Adam moments when the file has them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub vocab: Vocabulary,
    pub params: Parameters<f32>,
    pub state: Option<TrainState<f32>>,
}

pub fn file_name(step: u64) -> String {
    format!("checkpoint-{step:08}.bin")
}

fn entries(p: &Parameters<f32>, prefix: &str) -> Vec<TensorEntry> {
    p.names()
        .iter()
        .zip(p.tensors())
        .map(|(n, t)| TensorEntry { name: format!("{prefix}{n}"), shape: [t.rows(), t.cols()] })
        .collect()
}

pub fn encode(state: &TrainState<f32>, vocab: &Vocabulary, train: Option<&TrainConfig>, with_optimizer: bool) -> Vec<u8> {
    let mut tensors = entries(&state.params, "");
    let mut groups = vec![&state.params];
    if with_optimizer {
        tensors.extend(entries(&state.m, ADAM_M));
        tensors.extend(entries(&state.v, ADAM_V));
        groups.extend([&state.m, &state.v]);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype: "f32".into(),
        step: state.step,
        smoothed_loss: state.smoothed_loss,
        model: *state.params.config(),
        train: train.copied(),
        vocab_sha256: vocab_fingerprint(vocab),
        vocab: vocab.tokens().to_vec(),
        tensors,
    };
    let mut bytes = serde_json::to_vec(&manifest).expect("serializable manifest");
    bytes.push(b'\n');
    for g in groups {
        for t in g.tensors() {
            for x in t.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    bytes
}

pub fn save(path: &Path, state: &TrainState<f32>, vocab: &Vocabulary, train: Option<&TrainConfig>) -> Result<()> {
    write_atomic(path, &encode(state, vocab, train, true))
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: String| CliError::parse(path, None, msg);
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION || manifest.dtype != "f32" {
        return Err(bad(format!(
            "unsupported checkpoint {} v{} ({})",
            manifest.format, manifest.version, manifest.dtype
        )));
    }
    let vocab = Vocabulary::from_tokens(manifest.vocab.clone()).map_err(|e| bad(e.to_string()))?;
    if vocab_fingerprint(&vocab) != manifest.vocab_sha256 {
        return Err(bad("vocabulary does not match its fingerprint".into()));
    }
    let payload = &bytes[nl + 1..];
    let total: usize = manifest.tensors.iter().map(|t| t.shape[0] * t.shape[1]).sum();
    if payload.len() != total * 4 {
        return Err(bad(format!("payload has {} bytes, manifest needs {}", payload.len(), total * 4)));
    }
    let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let (mut params, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for t in &manifest.tensors {
        let data: Vec<f32> = floats.by_ref().take(t.shape[0] * t.shape[1]).collect();
        let mat = Matrix::from_vec(t.shape[0], t.shape[1], data);
        if let Some(n) = t.name.strip_prefix(ADAM_M) {
            m.push((n.to_string(), mat));
        } else if let Some(n) = t.name.strip_prefix(ADAM_V) {
            v.push((n.to_string(), mat));
        } else {
            params.push((t.name.clone(), mat));
        }
    }
    let cfg = manifest.model;
    let params = Parameters::from_named(cfg, params).map_err(|e| bad(e.to_string()))?;
    if cfg.vocab_size != vocab.len() {
        return Err(bad(format!("model vocab_size {} but {} vocabulary tokens", cfg.vocab_size, vocab.len())));
    }
    let state = if m.is_empty() && v.is_empty() {
        None
    } else {
        let m = Parameters::from_named(cfg, m).map_err(|e| bad(format!("adam moments: {e}")))?;
        let v = Parameters::from_named(cfg, v).map_err(|e| bad(format!("adam moments: {e}")))?;
        Some(TrainState { step: manifest.step, params: params.clone(), m, v, smoothed_loss: manifest.smoothed_loss })
    };
    Ok(Checkpoint { manifest, vocab, params, state })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(path, &bytes)
}

/// Checkpoint with the highest step in `dir`, if any.
pub fn latest(dir: &Path) -> Result<Option<PathBuf>> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(CliError::io(dir, e)),
    };
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in rd {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        let step = name
            .to_str()
            .and_then(|n| n.strip_prefix("checkpoint-"))
            .and_then(|n| n.strip_suffix(".bin"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(s) = step {
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, entry.path()));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}
