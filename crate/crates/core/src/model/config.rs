use alloc::format;

use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::{Error, Result};

/// Shape and regularization of the encoder-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub max_aug_len: usize,
    pub max_tgt_len: usize,
    pub max_segments: usize,
    pub p_offset: usize,
    pub dropout: f64,
    pub gate_hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ffn: 256,
            vocab_size: 0,
            max_aug_len: 256,
            max_tgt_len: 128,
            max_segments: 16,
            p_offset: 128,
            dropout: 0.1,
            gate_hidden: 128,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ffn", self.d_ffn),
            ("max_aug_len", self.max_aug_len),
            ("max_tgt_len", self.max_tgt_len),
            ("p_offset", self.p_offset),
            ("gate_hidden", self.gate_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < crate::data::SPECIAL_TOKENS.len() {
            return Err(Error::InvalidConfig(format!("vocab_size {} is too small", self.vocab_size)));
        }
        if self.max_segments < 2 {
            return Err(Error::InvalidConfig("max_segments must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_tgt_len + 1 > self.position_rows() {
            return Err(Error::InvalidConfig("max_tgt_len exceeds the position table".into()));
        }
        Ok(())
    }

    /// Rows of the learned position table, shared by encoder and decoder.
    pub fn position_rows(&self) -> usize {
        self.p_offset + self.max_aug_len
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            p_offset: self.p_offset,
            max_segments: self.max_segments,
            max_aug_len: self.max_aug_len,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
