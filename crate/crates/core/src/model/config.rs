use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where layer normalization sits relative to each sublayer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerNormPlacement {
    /// `x + f(LN(x))`, plus a final LN before the output projection.
    Pre,
    /// `LN(x + f(x))`.
    Post,
    /// No normalization at all.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub head_dim: usize,
    pub mlp_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub tie_embeddings: bool,
    pub layer_norm: LayerNormPlacement,
}

impl ModelConfig {
    /// Two layers, one head, width 32, no dropout, for Dyck-k.
    pub fn dyck(bracket_types: u32, max_len: usize) -> Self {
        Self {
            layers: 2,
            heads: 1,
            model_dim: 32,
            head_dim: 32,
            mlp_dim: 128,
            max_len,
            vocab_size: 2 * bracket_types as usize + 2,
            dropout: 0.0,
            tie_embeddings: true,
            layer_norm: LayerNormPlacement::Pre,
        }
    }

    /// Four layers of four heads over the character vocabulary.
    pub fn code_full(vocab_size: usize) -> Self {
        Self {
            layers: 4,
            heads: 4,
            model_dim: 256,
            head_dim: 64,
            mlp_dim: 512,
            max_len: 514,
            vocab_size,
            dropout: 0.1,
            tie_embeddings: true,
            layer_norm: LayerNormPlacement::Pre,
        }
    }

    /// Scaled-down code model for desk runs.
    pub fn code_desk(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            heads: 2,
            model_dim: 128,
            ..Self::code_full(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.vocab_size == 0 || self.model_dim == 0 || self.max_len == 0 {
            return bad("vocab_size, model_dim and max_len must be positive".into());
        }
        if self.layers > 0 && (self.heads == 0 || self.head_dim == 0 || self.mlp_dim == 0) {
            return bad("heads, head_dim and mlp_dim must be positive when layers > 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_count(&self) -> usize {
        self.layers * self.heads
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub seed: u64,
    /// Steps between evaluations; 0 disables periodic evaluation.
    pub eval_every: usize,
    /// Sentences drawn from each evaluation split per evaluation.
    pub eval_sample: usize,
    /// Steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 100_000,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            weight_decay: 1e-4,
            warmup_steps: 10_000,
            peak_lr: 5e-3,
            seed: 0,
            eval_every: 1000,
            eval_sample: 2000,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.warmup_steps == 0 {
            return Err(Error::InvalidArgument("steps, batch_size and warmup_steps must be positive".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::InvalidArgument(format!("peak_lr must be > 0, got {}", self.peak_lr)));
        }
        Ok(())
    }

    /// Linear warmup then inverse-square-root decay; `step` counts from 1.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}
