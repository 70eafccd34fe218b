use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Inventory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub phoneme_embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub text_encoder_layers: usize,
    pub spec_encoder_layers: usize,
    pub decoder_layers: usize,
    pub cnn_layers: usize,
    pub cnn_kernel: usize,
    pub dropout: f64,
    pub ffn_inner_dim: usize,
    pub n_mels: usize,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            phoneme_embed_dim: 512,
            hidden_dim: 256,
            heads: 4,
            text_encoder_layers: 2,
            spec_encoder_layers: 2,
            decoder_layers: 5,
            cnn_layers: 3,
            cnn_kernel: 5,
            dropout: 0.2,
            ffn_inner_dim: 1024,
            n_mels: 80,
            vocab_size: Inventory::arpabet().len(),
        }
    }
}

impl ModelConfig {
    /// Smallest configuration exercising every component once.
    pub fn tiny() -> Self {
        Self {
            phoneme_embed_dim: 32,
            hidden_dim: 32,
            heads: 4,
            text_encoder_layers: 1,
            spec_encoder_layers: 1,
            decoder_layers: 1,
            cnn_layers: 1,
            cnn_kernel: 5,
            dropout: 0.0,
            ffn_inner_dim: 64,
            ..Self::default()
        }
    }

    /// Desk-scale configuration for short single-CPU training runs.
    pub fn small() -> Self {
        Self {
            phoneme_embed_dim: 64,
            hidden_dim: 64,
            heads: 4,
            text_encoder_layers: 1,
            spec_encoder_layers: 1,
            decoder_layers: 2,
            cnn_layers: 2,
            cnn_kernel: 5,
            dropout: 0.0,
            ffn_inner_dim: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.phoneme_embed_dim,
            self.hidden_dim,
            self.heads,
            self.ffn_inner_dim,
            self.n_mels,
            self.vocab_size,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if self.cnn_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("cnn_kernel {} must be odd", self.cnn_kernel)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
