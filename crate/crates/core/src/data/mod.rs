//! Everything the model consumes: caption datasets, vocabulary, word
//! vectors, audio embedding files, the mock windowed encoder, and the
//! synthetic corpus generator.

pub mod audio;
pub mod captions;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;
pub mod word_vectors;

pub use audio::{
    read_embedding_file, window_embed, write_embedding_file, EmbeddingStore, EncoderSpec,
    FeatureSequence, Pooling,
};
pub use captions::{CaptionDataset, ClipCaptions, Split, CAPTIONS_PER_CLIP};
pub use synthetic::{make_synthetic_corpus, CaptionGrammar, SyntheticCorpus};
pub use tokenize::tokenize_caption;
pub use vocab::{Vocabulary, END_INDEX, PAD_INDEX, UNK_INDEX};
pub use word_vectors::load_word_embedding_table;

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::model::table::WordSource;

/// A data directory in the layout the synthetic generator writes and the
/// experiment runner reads:
///
/// ```text
/// <root>/captions_train.csv
/// <root>/captions_validation.csv
/// <root>/captions_evaluation.csv
/// <root>/embeddings/<encoder>/<overlap>/<clip_id>.aemb
/// <root>/word_vectors/<source>.txt
/// ```
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn captions_path(&self, split: Split) -> PathBuf {
        self.root.join(format!("captions_{}.csv", split.name()))
    }

    pub fn load_split(&self, split: Split) -> Result<CaptionDataset> {
        CaptionDataset::from_csv(self.captions_path(split), split)
    }

    pub fn store(&self) -> EmbeddingStore {
        EmbeddingStore::new(&self.root)
    }

    pub fn word_vectors_path(&self, source: WordSource) -> PathBuf {
        self.root.join("word_vectors").join(format!("{}.txt", source.name()))
    }
}
