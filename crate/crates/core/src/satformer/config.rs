use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Token vocabulary cap, reserved ids included.
    pub vocab_size: usize,
    /// Length of the aggregate + query + separator + response sequence.
    pub max_text_len: usize,
    pub embed_dim: usize,
    /// Turns per prediction window, the current turn included.
    pub num_turns: usize,
    pub text_blocks: usize,
    pub struct_blocks: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// The `d` in `softmax(Q K^T / sqrt(d)) V` across turns.
    pub attention_scale: f64,
    pub decision_threshold: f64,
}

impl PredictorConfig {
    /// Hyperparameters of the production-scale model: 240-dim embeddings,
    /// five turns, eight text blocks, four structured blocks, threshold 0.7.
    pub fn reference() -> Self {
        PredictorConfig {
            vocab_size: 20_000,
            max_text_len: 64,
            embed_dim: 240,
            num_turns: 5,
            text_blocks: 8,
            struct_blocks: 4,
            num_heads: 4,
            ffn_dim: 4 * 240,
            attention_scale: 240.0,
            decision_threshold: 0.7,
        }
    }

    /// Small model that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        PredictorConfig {
            vocab_size: 400,
            max_text_len: 24,
            embed_dim: 16,
            num_turns: 3,
            text_blocks: 1,
            struct_blocks: 1,
            num_heads: 2,
            ffn_dim: 32,
            attention_scale: 16.0,
            decision_threshold: 0.7,
        }
    }

    /// Gradient-check sized model.
    pub fn tiny() -> Self {
        PredictorConfig {
            vocab_size: 50,
            max_text_len: 12,
            embed_dim: 8,
            num_turns: 2,
            text_blocks: 1,
            struct_blocks: 1,
            num_heads: 2,
            ffn_dim: 16,
            attention_scale: 8.0,
            decision_threshold: 0.7,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("num_turns", self.num_turns),
            ("text_blocks", self.text_blocks),
            ("struct_blocks", self.struct_blocks),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("{name} must be >= 1")));
        }
        if self.vocab_size <= super::vocab::RESERVED_TOKENS.len() {
            return Err(Error::Validation("vocab_size must exceed the reserved ids".into()));
        }
        if self.max_text_len < 3 {
            return Err(Error::Validation("max_text_len must fit aggregate, separator and one token".into()));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Validation(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.attention_scale > 0.0 && self.attention_scale.is_finite()) {
            return Err(Error::Validation("attention_scale must be positive".into()));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Validation("decision_threshold must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid() {
        let c = PredictorConfig::reference();
        c.validate().unwrap();
        assert_eq!((c.embed_dim, c.num_turns, c.text_blocks, c.struct_blocks), (240, 5, 8, 4));
        assert_eq!(c.decision_threshold, 0.7);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let c = PredictorConfig { num_heads: 3, ..PredictorConfig::tiny() };
        assert!(c.validate().is_err());
        assert!(PredictorConfig { decision_threshold: 1.0, ..PredictorConfig::tiny() }.validate().is_err());
    }
}
