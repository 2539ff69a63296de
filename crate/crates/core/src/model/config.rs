//! Model hyperparameters and their validity rules.

use crate::dst_attention::AttentionConfig;
use crate::error::{Error, Result};
use crate::positional::{RopeConfig, RopeScheme};

/// Everything needed to build and run one decoder variant. `seed` drives the
/// deterministic parameter initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Decoder block count K.
    pub blocks: usize,
    /// Model width D = heads · head_dim.
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Text vocabulary size.
    pub vocab: usize,
    /// Hidden width of the gated MLP.
    pub mlp_hidden: usize,
    /// Width of the synthetic frame embeddings entering the projector.
    pub enc_dim: usize,
    pub attention: AttentionConfig,
    pub rope: RopeConfig,
    /// Frame count of expected inputs.
    pub frames: usize,
    /// Patch grid of expected inputs.
    pub grid_h: usize,
    pub grid_w: usize,
    pub seed: u64,
}

/// Gated-MLP width: 4·D/1.5 rounded to a multiple of `heads`.
pub fn default_mlp_hidden(width: usize, heads: usize) -> usize {
    let raw = 4.0 * width as f64 / 1.5;
    let per_head = (raw / heads as f64).round().max(1.0) as usize;
    per_head * heads
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Validation("need at least one block".into()));
        }
        if self.width != self.heads * self.head_dim {
            return Err(Error::Validation(format!(
                "width {} != heads {} x head_dim {}",
                self.width, self.heads, self.head_dim
            )));
        }
        if self.attention.heads != self.heads || self.attention.head_dim != self.head_dim {
            return Err(Error::Validation(
                "attention heads/head_dim disagree with model config".into(),
            ));
        }
        if self.rope.head_dim != self.head_dim {
            return Err(Error::Validation(format!(
                "rope head_dim {} != model head_dim {}",
                self.rope.head_dim, self.head_dim
            )));
        }
        if self.vocab < 4 {
            return Err(Error::Validation(format!(
                "vocabulary must hold yes/no/answer/pad symbols, got {}",
                self.vocab
            )));
        }
        if self.mlp_hidden == 0 || self.enc_dim == 0 {
            return Err(Error::Validation("mlp_hidden and enc_dim must be positive".into()));
        }
        if self.frames == 0 || self.frames % 4 != 0 {
            return Err(Error::Validation(format!(
                "frame count must be a positive multiple of 4, got {}",
                self.frames
            )));
        }
        if self.grid_h < 2 || self.grid_w < 2 || self.grid_h % 2 != 0 || self.grid_w % 2 != 0 {
            return Err(Error::Validation(format!(
                "patch grid must be even and at least 2x2, got {}x{}",
                self.grid_h, self.grid_w
            )));
        }
        // Balanced IDs need N >= M, i.e. h·w >= 3T-1. A distinct-only model
        // never reads the balanced track, so the constraint is moot there.
        let n = self.grid_h * self.grid_w;
        let m = 3 * self.frames - 1;
        if self.attention.rope_scheme != RopeScheme::Distinct && n < m {
            return Err(Error::Validation(format!(
                "grid {}x{} yields {n} spatial tokens, fewer than {m} temporal ones (N >= M)",
                self.grid_h, self.grid_w
            )));
        }
        Ok(())
    }

    /// Temporal-stream length for the configured frame count.
    pub fn temporal_len(&self) -> usize {
        3 * self.frames - 1
    }

    /// Spatial-stream length for the configured grid.
    pub fn spatial_len(&self) -> usize {
        self.grid_h * self.grid_w
    }
}
