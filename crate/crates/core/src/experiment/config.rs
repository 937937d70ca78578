//! Experiment configuration: one cell of the setting grid plus training
//! hyperparameters, and the desk/paper profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::{AdapterConfig, AdapterKind, DecoderConfig, FeedForwardKind};
use crate::model::sequence::{EncoderId, Overlap};
use crate::model::table::WordSource;
use crate::numerics::OptimizerConfig;

/// The grid axes of one setting, used as its stable identifier:
/// `<encoder>-<overlap>-<adapter>-<word>-<ft|fx>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SettingId {
    pub encoder: EncoderId,
    pub overlap: Overlap,
    pub adapter: AdapterKind,
    pub word_source: WordSource,
    pub fine_tune: bool,
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}-{}-{}",
            self.encoder.name(),
            self.overlap.name(),
            self.adapter.name(),
            self.word_source.name(),
            if self.fine_tune { "ft" } else { "fx" }
        )
    }
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 5 {
            return Err(Error::format(format!("setting id {s:?} must have 5 dash-separated parts")));
        }
        fn from_json<T: serde::de::DeserializeOwned>(v: &str) -> serde_json::Result<T> {
            serde_json::from_value(serde_json::Value::String(v.to_string()))
        }
        let encoder: EncoderId = from_json(parts[0])
            .map_err(|_| Error::format(format!("unknown encoder {:?}", parts[0])))?;
        let overlap: Overlap = from_json(parts[1])
            .map_err(|_| Error::format(format!("unknown overlap {:?}", parts[1])))?;
        let adapter: AdapterKind = from_json(parts[2])
            .map_err(|_| Error::format(format!("unknown adapter {:?}", parts[2])))?;
        let word_source: WordSource = from_json(parts[3])
            .map_err(|_| Error::format(format!("unknown word source {:?}", parts[3])))?;
        let fine_tune = match parts[4] {
            "ft" => true,
            "fx" => false,
            other => return Err(Error::format(format!("bad fine-tune flag {other:?}"))),
        };
        Ok(SettingId { encoder, overlap, adapter, word_source, fine_tune })
    }
}

/// One experiment cell: grid axes plus everything training needs. JSON
/// config files mirror these field names. `seed` selects the run within a
/// setting; grid enumeration leaves it 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoder_id: EncoderId,
    pub overlap: Overlap,
    pub adapter: AdapterConfig,
    pub word_source: WordSource,
    pub fine_tune: bool,
    #[serde(default)]
    pub seed: u64,
    pub decoder: DecoderConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Optional extra stop rule for convergence-style experiments: stop as
    /// soon as the epoch train loss drops below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_when_train_loss_below: Option<f64>,
}

impl ExperimentConfig {
    pub fn setting_id(&self) -> SettingId {
        SettingId {
            encoder: self.encoder_id,
            overlap: self.overlap,
            adapter: self.adapter.kind,
            word_source: self.word_source,
            fine_tune: self.fine_tune,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_source == WordSource::BertStatic && self.fine_tune {
            return Err(Error::config(
                "bert_static word embeddings are never fine-tuned".to_string(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if !self.word_source.file_backed() && self.decoder.word_dim == 0 {
            return Err(Error::config(format!(
                "word source {} needs decoder.word_dim set",
                self.word_source.name()
            )));
        }
        self.decoder.validate_architecture()?;
        self.optimizer.validate()?;
        Ok(())
    }
}

/// Everything a grid cell shares: architecture scale, optimizer, training
/// control, and the adapter sizing used when a kind is selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDefaults {
    pub decoder: DecoderConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub mlp_hidden: usize,
    pub adapter_heads: usize,
    pub adapter_head_dim: usize,
    /// Table width for the seed-initialized `random` / `scratch` sources.
    pub random_word_dim: usize,
}

impl GridDefaults {
    /// Adapter configuration for a kind under these defaults, given the
    /// encoder's embedding width.
    pub fn adapter_for(&self, kind: AdapterKind, feature_dim: usize) -> AdapterConfig {
        let output_dim = match kind {
            AdapterKind::Identity => feature_dim,
            AdapterKind::Mlp | AdapterKind::Mha => self.decoder.model_width,
        };
        AdapterConfig {
            kind,
            hidden: self.mlp_hidden,
            heads: self.adapter_heads,
            head_dim: self.adapter_head_dim,
            output_dim,
        }
    }
}

/// Named profiles. `desk` is small enough to train in seconds; `paper`
/// carries the published hyperparameters (N=3 blocks, four 128-dimensional
/// heads, Adam at 0.001/0.9/0.999/1e-8, minibatch 256, patience 10).
pub mod profiles {
    use super::*;

    pub fn desk() -> GridDefaults {
        GridDefaults {
            decoder: DecoderConfig {
                num_blocks: 2,
                heads: 4,
                head_dim: 16,
                model_width: 64,
                max_caption_len: 30,
                vocab_size: 0,
                word_dim: 32,
                feed_forward: FeedForwardKind::Linear,
                ffn_hidden: 0,
                dropout: 0.0,
            },
            optimizer: OptimizerConfig::default(),
            batch_size: 16,
            patience: 10,
            max_epochs: 200,
            mlp_hidden: 32,
            adapter_heads: 4,
            adapter_head_dim: 16,
            random_word_dim: 32,
        }
    }

    pub fn paper() -> GridDefaults {
        GridDefaults {
            decoder: DecoderConfig {
                num_blocks: 3,
                heads: 4,
                head_dim: 128,
                model_width: 512,
                max_caption_len: 30,
                vocab_size: 0,
                word_dim: 300,
                feed_forward: FeedForwardKind::Linear,
                ffn_hidden: 0,
                dropout: 0.0,
            },
            optimizer: OptimizerConfig { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
            batch_size: 256,
            patience: 10,
            max_epochs: 200,
            mlp_hidden: 256,
            adapter_heads: 4,
            adapter_head_dim: 128,
            random_word_dim: 300,
        }
    }

    pub fn by_name(name: &str) -> Option<GridDefaults> {
        match name {
            "desk" => Some(desk()),
            "paper" => Some(paper()),
            _ => None,
        }
    }
}
