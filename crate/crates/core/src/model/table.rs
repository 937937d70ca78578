//! Word-embedding tables: one row per vocabulary token, frozen or trainable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Where a word-embedding table comes from. The four file-backed sources
/// are 300-dimensional; BERT embeddings are 768-dimensional and always
/// frozen; `random` and `scratch` are seeded initializations of free width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordSource {
    W2v,
    Glove,
    Fasttext,
    CbowClotho,
    Random,
    BertStatic,
    Scratch,
}

impl WordSource {
    pub fn name(&self) -> &'static str {
        match self {
            WordSource::W2v => "w2v",
            WordSource::Glove => "glove",
            WordSource::Fasttext => "fasttext",
            WordSource::CbowClotho => "cbow_clotho",
            WordSource::Random => "random",
            WordSource::BertStatic => "bert_static",
            WordSource::Scratch => "scratch",
        }
    }

    /// Fixed embedding width where the source dictates one.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            WordSource::W2v | WordSource::Glove | WordSource::Fasttext | WordSource::CbowClotho => {
                Some(300)
            }
            WordSource::BertStatic => Some(768),
            WordSource::Random | WordSource::Scratch => None,
        }
    }

    /// Sources loaded from a word-vector file rather than initialized.
    pub fn file_backed(&self) -> bool {
        !matches!(self, WordSource::Random | WordSource::Scratch)
    }
}

/// W x W' table of word embeddings, row order matching the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    rows: Tensor,
    pub source: WordSource,
    pub trainable: bool,
}

/// Draws one embedding row the way the `random` source does: uniform with
/// variance 1/dim. Rows for tokens missing from a vector file use the same
/// distribution.
pub fn random_embedding_row(rng: &mut Rng, dim: usize) -> Vec<f64> {
    let limit = (3.0 / dim as f64).sqrt();
    (0..dim).map(|_| rng.uniform(-limit, limit)).collect()
}

impl WordEmbeddingTable {
    pub fn from_rows(
        rows: Tensor,
        source: WordSource,
        trainable: bool,
    ) -> Result<Self> {
        let (_, dim) = rows.dims2()?;
        if let Some(required) = source.required_dim() {
            if dim != required {
                return Err(Error::config(format!(
                    "{} embeddings must be {required}-dimensional, got {dim}",
                    source.name()
                )));
            }
        }
        Ok(WordEmbeddingTable { rows, source, trainable })
    }

    /// Seeded random table for the `random` / `scratch` sources.
    pub fn random(
        vocab_size: usize,
        dim: usize,
        source: WordSource,
        trainable: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if source.file_backed() {
            return Err(Error::config(format!(
                "source {} is file-backed, not randomly initialized",
                source.name()
            )));
        }
        let mut data = Vec::with_capacity(vocab_size * dim);
        for _ in 0..vocab_size {
            data.extend(random_embedding_row(rng, dim));
        }
        let rows = Tensor::new(vec![vocab_size, dim], data)?;
        WordEmbeddingTable::from_rows(rows, source, trainable)
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn into_rows(self) -> Tensor {
        self.rows
    }

    /// Value-level embedding lookup: row 0 is the zero start vector, row
    /// i+1 is the table row of `tokens[i]`. The differentiable version of
    /// this lookup lives on the tape.
    pub fn embed_tokens(&self, tokens: &[usize]) -> Result<Tensor> {
        let dim = self.dim();
        let w = self.vocab_size();
        if let Some(&t) = tokens.iter().find(|&&t| t >= w) {
            return Err(Error::shape(format!(
                "embed_tokens: token {t} out of range for vocabulary {w}"
            )));
        }
        let mut data = vec![0.0; (tokens.len() + 1) * dim];
        for (i, &t) in tokens.iter().enumerate() {
            data[(i + 1) * dim..(i + 2) * dim]
                .copy_from_slice(&self.rows.data()[t * dim..(t + 1) * dim]);
        }
        Tensor::new(vec![tokens.len() + 1, dim], data)
    }
}
