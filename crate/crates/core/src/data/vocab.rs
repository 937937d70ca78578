//! Vocabulary over training-split captions, with fixed reserved indices.

use std::collections::HashMap;

use crate::data::captions::{CaptionDataset, Split};
use crate::data::tokenize::tokenize_caption;
use crate::error::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const END_INDEX: usize = 1;
pub const UNK_INDEX: usize = 2;
pub const PAD_TOKEN: &str = "<pad>";
pub const END_TOKEN: &str = "<end>";
pub const UNK_TOKEN: &str = "<unk>";

/// Ordered token set. Index 0/1/2 are the reserved pad, end, and unknown
/// tokens; corpus tokens follow, most frequent first, ties lexicographic.
/// The tokenizer strips angle brackets, so reserved names cannot collide
/// with corpus tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from raw caption strings (training split text only).
    pub fn from_captions<'a>(
        captions: impl IntoIterator<Item = &'a str>,
        min_count: usize,
    ) -> Result<Self> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for caption in captions {
            any = true;
            for token in tokenize_caption(caption)? {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::Empty("vocabulary corpus".to_string()));
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = vec![PAD_TOKEN.to_string(), END_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(kept.into_iter().map(|(t, _)| t));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary { tokens, index })
    }

    /// Builds from the training split of a dataset; any other split is
    /// rejected so evaluation text can never leak into the vocabulary.
    pub fn build(train: &CaptionDataset, min_count: usize) -> Result<Self> {
        if train.split() != Split::Train {
            return Err(Error::config(format!(
                "vocabulary must be built from the train split, got {}",
                train.split().name()
            )));
        }
        Self::from_captions(train.examples().map(|(_, caption)| caption), min_count)
    }

    /// Vocabulary size W (including reserved tokens).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved tokens are always present
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps token strings to indices, unknowns to the reserved index.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t).unwrap_or(UNK_INDEX)).collect()
    }

    /// Token strings for indices, dropping the end token and everything
    /// after it.
    pub fn decode_until_end(&self, indices: &[usize]) -> Vec<&str> {
        indices
            .iter()
            .take_while(|&&i| i != END_INDEX)
            .map(|&i| self.token(i))
            .collect()
    }
}
