//! Grid enumeration: every combination of encoder, overlap, adapter, and
//! word-embedding setting, in a fixed deterministic order.

use crate::data::audio::EncoderSpec;
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, GridDefaults};
use crate::model::config::AdapterKind;
use crate::model::sequence::{EncoderId, Overlap};
use crate::model::table::WordSource;

/// The eleven word-embedding settings: five sources each fixed and
/// fine-tuned, plus BERT which is only ever fixed.
pub fn word_settings() -> Vec<(WordSource, bool)> {
    let mut settings = Vec::with_capacity(11);
    for source in [
        WordSource::W2v,
        WordSource::Glove,
        WordSource::Fasttext,
        WordSource::CbowClotho,
        WordSource::Random,
    ] {
        settings.push((source, false));
        settings.push((source, true));
    }
    settings.push((WordSource::BertStatic, false));
    settings
}

/// The full default grid: 4 encoders x 2 overlaps x 3 adapters x 11 word
/// settings = 264 configurations, seed-free, in nested declaration order.
pub fn enumerate_grid(defaults: &GridDefaults) -> Vec<ExperimentConfig> {
    let mut grid = Vec::with_capacity(264);
    for encoder in EncoderId::NAMED {
        let feature_dim = EncoderSpec::named(encoder).unwrap().embedding_dim;
        for overlap in Overlap::ALL {
            for adapter_kind in AdapterKind::ALL {
                let adapter = defaults.adapter_for(adapter_kind, feature_dim);
                for (word_source, fine_tune) in word_settings() {
                    let mut decoder = defaults.decoder;
                    if word_source.file_backed() {
                        decoder.word_dim = word_source.required_dim().unwrap();
                    } else {
                        decoder.word_dim = defaults.random_word_dim;
                    }
                    grid.push(ExperimentConfig {
                        encoder_id: encoder,
                        overlap,
                        adapter,
                        word_source,
                        fine_tune,
                        seed: 0,
                        decoder,
                        optimizer: defaults.optimizer,
                        batch_size: defaults.batch_size,
                        patience: defaults.patience,
                        max_epochs: defaults.max_epochs,
                        stop_when_train_loss_below: None,
                    });
                }
            }
        }
    }
    grid
}

/// Conjunctive filter over grid axes, parsed from expressions such as
/// `encoder=yamnet,overlap=half` or `adapter=mha|mlp word=w2v`. Keys:
/// `encoder`, `overlap`, `adapter`, `word`, `fine_tune`; `|` separates
/// alternative values for one key.
#[derive(Debug, Clone, Default)]
pub struct GridFilter {
    terms: Vec<(String, Vec<String>)>,
}

impl GridFilter {
    pub fn parse(expr: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in expr.split([',', ' ']).filter(|t| !t.is_empty()) {
            let (key, values) = raw.split_once('=').ok_or_else(|| {
                Error::config(format!("filter term {raw:?} is not key=value"))
            })?;
            if !["encoder", "overlap", "adapter", "word", "fine_tune"].contains(&key) {
                return Err(Error::config(format!("unknown filter key {key:?}")));
            }
            terms.push((key.to_string(), values.split('|').map(str::to_string).collect()));
        }
        Ok(GridFilter { terms })
    }

    pub fn matches(&self, cfg: &ExperimentConfig) -> bool {
        self.terms.iter().all(|(key, values)| {
            let actual: String = match key.as_str() {
                "encoder" => cfg.encoder_id.name().to_string(),
                "overlap" => cfg.overlap.name().to_string(),
                "adapter" => cfg.adapter.kind.name().to_string(),
                "word" => cfg.word_source.name().to_string(),
                "fine_tune" => cfg.fine_tune.to_string(),
                _ => unreachable!("keys validated at parse time"),
            };
            values.iter().any(|v| *v == actual)
        })
    }

    pub fn apply(&self, grid: Vec<ExperimentConfig>) -> Vec<ExperimentConfig> {
        grid.into_iter().filter(|cfg| self.matches(cfg)).collect()
    }
}
