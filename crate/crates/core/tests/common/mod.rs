//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use audiocap_core::experiment::{profiles, ExperimentConfig, GridDefaults};
use audiocap_core::model::{
    AdapterConfig, AdapterKind, CaptionModel, DecoderConfig, EmbeddingSequence, EncoderId,
    FeedForwardKind, Overlap, WordEmbeddingTable, WordSource,
};
use audiocap_core::Rng;

/// The tiny architecture used by the gradient and causality checks:
/// model width 8, 2 heads, a single block, vocabulary of 5, word width 4.
pub fn tiny_decoder() -> DecoderConfig {
    DecoderConfig {
        num_blocks: 1,
        heads: 2,
        head_dim: 4,
        model_width: 8,
        max_caption_len: 8,
        vocab_size: 5,
        word_dim: 4,
        feed_forward: FeedForwardKind::Linear,
        ffn_hidden: 0,
        dropout: 0.0,
    }
}

pub fn adapter_for(kind: AdapterKind, feature_dim: usize, width: usize) -> AdapterConfig {
    match kind {
        AdapterKind::Identity => {
            AdapterConfig { kind, hidden: 0, heads: 0, head_dim: 0, output_dim: feature_dim }
        }
        AdapterKind::Mlp => {
            AdapterConfig { kind, hidden: 5, heads: 0, head_dim: 0, output_dim: width }
        }
        AdapterKind::Mha => {
            AdapterConfig { kind, hidden: 0, heads: 2, head_dim: width / 2, output_dim: width }
        }
    }
}

pub const TINY_FEATURE_DIM: usize = 6;

pub fn tiny_model(kind: AdapterKind, trainable_table: bool, seed: u64) -> CaptionModel {
    let decoder = tiny_decoder();
    let table = WordEmbeddingTable::random(
        decoder.vocab_size,
        decoder.word_dim,
        WordSource::Scratch,
        trainable_table,
        &mut Rng::new(seed ^ 0x5EED),
    )
    .unwrap();
    CaptionModel::new(
        decoder,
        adapter_for(kind, TINY_FEATURE_DIM, decoder.model_width),
        TINY_FEATURE_DIM,
        table,
        &mut Rng::new(seed),
    )
    .unwrap()
}

pub fn mock_sequence(t: usize, f: usize, seed: u64) -> EmbeddingSequence {
    let mut rng = Rng::new(seed);
    let values: Vec<f32> = (0..t * f).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    EmbeddingSequence::new(values, t, f, EncoderId::Mock, Overlap::None, 1.0, 1.0).unwrap()
}

/// A desk-profile configuration over the mock encoder, suitable for the
/// synthetic corpora (feature width from `CaptionGrammar::default`).
pub fn mock_config(
    defaults: &GridDefaults,
    adapter: AdapterKind,
    overlap: Overlap,
    word_source: WordSource,
    fine_tune: bool,
    feature_dim: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        encoder_id: EncoderId::Mock,
        overlap,
        adapter: defaults.adapter_for(adapter, feature_dim),
        word_source,
        fine_tune,
        seed: 0,
        decoder: defaults.decoder,
        optimizer: defaults.optimizer,
        batch_size: defaults.batch_size,
        patience: defaults.patience,
        max_epochs: defaults.max_epochs,
        stop_when_train_loss_below: None,
    }
}

pub fn desk_defaults() -> GridDefaults {
    profiles::desk()
}
