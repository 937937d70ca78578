//! Transformer-based audio captioning on precomputed audio embeddings.
//!
//! The pipeline is encoder -> adapter -> decoder: audio arrives as sequences
//! of embeddings extracted by frozen pre-trained encoders (read from files,
//! or produced by a mock windowed encoder), an adapter reshapes them for the
//! decoder, and a Transformer decoder generates captions token by token.
//! Everything runs on a small 64-bit tensor engine with reverse-mode
//! differentiation so that training, evaluation, and the full experiment
//! grid are reproducible bit for bit from a seed.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{Adam, Mask, OptimizerConfig, ParamId, ParamSet, Rng, Tape, Tensor, Var};
