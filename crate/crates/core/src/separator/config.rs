use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparatorConfig {
    pub levels: usize,
    pub base_channels: usize,
    /// Number of deepest skip levels that get self- and cross-attention.
    pub attention_levels: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub context_window: usize,
    /// Extra embedding rows shared by out-of-vocabulary words.
    pub hash_buckets: usize,
    /// Radial-basis features describing a frequency.
    pub freq_features: usize,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub init_seed: u64,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            base_channels: 16,
            attention_levels: 2,
            heads: 4,
            embed_dim: 64,
            context_window: 512,
            hash_buckets: 64,
            freq_features: 16,
            sample_rate: 16_000,
            stft: StftConfig::default(),
            init_seed: 0,
        }
    }
}

impl SeparatorConfig {
    /// Full-size layout: seven levels and eight heads.
    pub fn full() -> Self {
        Self {
            levels: 7,
            base_channels: 32,
            attention_levels: 2,
            heads: 8,
            embed_dim: 256,
            ..Self::default()
        }
    }

    /// Smaller network for repeated short runs.
    pub fn small() -> Self {
        Self {
            base_channels: 8,
            embed_dim: 32,
            ..Self::default()
        }
    }

    /// Two levels, four channels, one attention level; for gradient checks.
    pub fn micro() -> Self {
        Self {
            levels: 2,
            base_channels: 4,
            attention_levels: 1,
            heads: 2,
            embed_dim: 8,
            hash_buckets: 8,
            freq_features: 4,
            stft: StftConfig::new(30, 8),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.levels == 0 || self.base_channels == 0 {
            return Err(Error::invalid("levels and base_channels must be positive"));
        }
        if self.attention_levels > self.levels {
            return Err(Error::invalid("attention_levels exceeds levels"));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::invalid("embed_dim must be a positive multiple of heads"));
        }
        if self.context_window == 0 || self.freq_features == 0 {
            return Err(Error::invalid("context_window and freq_features must be positive"));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn has_attention(&self, level: usize) -> bool {
        level + self.attention_levels >= self.levels
    }

    pub fn multiple(&self) -> usize {
        1 << self.levels
    }

    /// Size rounded up to the next multiple of `2^levels`.
    pub fn padded(&self, n: usize) -> usize {
        n.div_ceil(self.multiple()) * self.multiple()
    }
}

/// Which prompts supervise each mixture tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// All six prompts: four sources and both pair mixtures.
    MultiLevel,
    /// The four single-source prompts only.
    SingleLevel,
}
