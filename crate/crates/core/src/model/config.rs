use serde::{Deserialize, Serialize};

use crate::audio_features::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::skeleton::BodySplit;

/// Architecture hyperparameters of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// U-net depth: pooling levels above the attention bottleneck.
    pub n_unet_levels: usize,
    /// Stacked U-net blocks.
    pub n_blocks: usize,
    pub lstm_dim: usize,
    pub dropout: f64,
    pub feature_dim: usize,
    pub body_dim: usize,
    pub rh_dim: usize,
    pub conv_kernel: usize,
    /// Relative distances are clipped to `±max_rel_dist` in attention.
    pub max_rel_dist: usize,
    pub split: BodySplit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 512,
            n_heads: 4,
            d_ff: 2048,
            n_unet_levels: 4,
            n_blocks: 2,
            lstm_dim: 512,
            dropout: 0.1,
            feature_dim: FEATURE_DIM,
            body_dim: 39,
            rh_dim: 6,
            conv_kernel: 3,
            max_rel_dist: 64,
            split: BodySplit::default(),
        }
    }
}

impl ModelConfig {
    /// Small configuration for tests and CPU smoke runs.
    pub fn tiny() -> Self {
        Self {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            n_unet_levels: 2,
            n_blocks: 1,
            lstm_dim: 8,
            max_rel_dist: 8,
            ..Self::default()
        }
    }

    pub fn output_dim(&self) -> usize {
        self.body_dim + self.rh_dim
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Shortest input the U-net can pool `n_unet_levels` times.
    pub fn min_len(&self) -> usize {
        1 << self.n_unet_levels
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("n_blocks", self.n_blocks),
            ("lstm_dim", self.lstm_dim),
            ("feature_dim", self.feature_dim),
            ("body_dim", self.body_dim),
            ("rh_dim", self.rh_dim),
            ("conv_kernel", self.conv_kernel),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model config: {name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "model config: d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::invalid("model config: conv_kernel must be odd"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("model config: dropout {} outside [0, 1)", self.dropout)));
        }
        if self.rh_dim < 3 {
            return Err(Error::invalid("model config: rh_dim must hold at least the wrist"));
        }
        self.split.validate()?;
        if 3 * self.split.body_indices.len() != self.body_dim
            || 3 * self.split.righthand_indices.len() != self.rh_dim
        {
            return Err(Error::invalid(format!(
                "model config: split has {} body and {} right-hand joints, dims are {} and {}",
                self.split.body_indices.len(),
                self.split.righthand_indices.len(),
                self.body_dim,
                self.rh_dim
            )));
        }
        Ok(())
    }
}
