//! Architecture configuration for the adapter and the decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which adapter processes the audio embedding sequence before the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Identity,
    Mlp,
    Mha,
}

impl AdapterKind {
    pub const ALL: [AdapterKind; 3] = [AdapterKind::Identity, AdapterKind::Mlp, AdapterKind::Mha];

    pub fn name(&self) -> &'static str {
        match self {
            AdapterKind::Identity => "identity",
            AdapterKind::Mlp => "mlp",
            AdapterKind::Mha => "mha",
        }
    }
}

/// Adapter architecture. `hidden` only matters for the MLP, `heads` and
/// `head_dim` only for the MHA variant. `output_dim` is the width the
/// adapter emits: the audio feature width for the identity adapter, the
/// decoder width for the learned ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub output_dim: usize,
}

impl AdapterConfig {
    /// Checks the adapter against the audio feature width and decoder width
    /// it will sit between.
    pub fn validate(&self, feature_dim: usize, model_width: usize) -> Result<()> {
        match self.kind {
            AdapterKind::Identity => {
                if self.output_dim != feature_dim {
                    return Err(Error::config(format!(
                        "identity adapter must keep the feature width: output_dim {} vs F' {}",
                        self.output_dim, feature_dim
                    )));
                }
            }
            AdapterKind::Mlp => {
                if self.output_dim != model_width {
                    return Err(Error::config(format!(
                        "mlp adapter output_dim {} must equal the decoder width {}",
                        self.output_dim, model_width
                    )));
                }
                if self.hidden == 0 {
                    return Err(Error::config("mlp adapter hidden size must be positive"));
                }
            }
            AdapterKind::Mha => {
                if self.output_dim != model_width {
                    return Err(Error::config(format!(
                        "mha adapter output_dim {} must equal the decoder width {}",
                        self.output_dim, model_width
                    )));
                }
                if self.heads == 0 || self.head_dim == 0 {
                    return Err(Error::config("mha adapter needs positive heads and head_dim"));
                }
                if self.heads * self.head_dim != self.output_dim {
                    return Err(Error::config(format!(
                        "mha adapter heads {} x head_dim {} must equal output_dim {}",
                        self.heads, self.head_dim, self.output_dim
                    )));
                }
                if self.output_dim % 2 != 0 {
                    return Err(Error::config(
                        "mha adapter output_dim must be even for positional encoding",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Feed-forward stage inside each decoder block. The default is a single
/// linear layer; `TwoLayerRelu` switches to the conventional two-layer
/// ReLU feed-forward network for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedForwardKind {
    #[default]
    Linear,
    TwoLayerRelu,
}

/// Transformer decoder architecture.
///
/// `vocab_size` and `word_dim` may be left at 0 in authored configuration
/// files; they are resolved from the data (vocabulary and word-embedding
/// table) when the model is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub num_blocks: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub model_width: usize,
    pub max_caption_len: usize,
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default)]
    pub word_dim: usize,
    #[serde(default)]
    pub feed_forward: FeedForwardKind,
    /// Hidden width of the two-layer feed-forward variant; 0 means
    /// 4 x model_width.
    #[serde(default)]
    pub ffn_hidden: usize,
    /// Dropout rate applied to sub-layer outputs during training. Default 0.
    #[serde(default)]
    pub dropout: f64,
}

impl DecoderConfig {
    /// Structural checks that do not depend on the data.
    pub fn validate_architecture(&self) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(Error::config("decoder needs at least one block"));
        }
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::config("decoder needs positive heads and head_dim"));
        }
        if self.heads * self.head_dim != self.model_width {
            return Err(Error::config(format!(
                "model_width {} must equal heads {} x head_dim {}",
                self.model_width, self.heads, self.head_dim
            )));
        }
        if self.model_width % 2 != 0 {
            return Err(Error::config("model_width must be even for positional encoding"));
        }
        if self.max_caption_len < 2 {
            return Err(Error::config("max_caption_len must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Checks after vocabulary and word-table resolution.
    pub fn validate_resolved(&self) -> Result<()> {
        self.validate_architecture()?;
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size is unresolved"));
        }
        if self.word_dim == 0 {
            return Err(Error::config("word_dim is unresolved"));
        }
        Ok(())
    }

    pub fn ffn_hidden_or_default(&self) -> usize {
        if self.ffn_hidden == 0 {
            4 * self.model_width
        } else {
            self.ffn_hidden
        }
    }
}
