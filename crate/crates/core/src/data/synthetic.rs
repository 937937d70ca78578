//! Deterministic synthetic corpora: desk-scale stand-ins for a real caption
//! dataset, with embeddings derived from the caption semantics so the
//! mapping is learnable.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::audio::{window_embed, EncoderSpec, FeatureSequence, Pooling};
use crate::data::captions::{CaptionDataset, ClipCaptions, Split};
use crate::data::word_vectors::write_word_vectors;
use crate::error::{Error, Result};
use crate::model::sequence::{EmbeddingSequence, Overlap};
use crate::model::table::{random_embedding_row, WordSource};
use crate::numerics::rng::{streams, sub_seed, Rng};

/// Closed token grammar for synthetic captions: `a <subject> <verb> <adverb>`.
#[derive(Debug, Clone)]
pub struct CaptionGrammar {
    pub subjects: Vec<&'static str>,
    pub verbs: Vec<&'static str>,
    pub adverbs: Vec<&'static str>,
    /// Width of the raw per-frame features fed to the mock encoder.
    pub feature_dim: usize,
    /// Width of the mock encoder's embeddings.
    pub embedding_dim: usize,
}

impl Default for CaptionGrammar {
    fn default() -> Self {
        CaptionGrammar {
            subjects: vec!["dog", "cat", "bird", "engine", "bell", "door", "stream", "child"],
            verbs: vec!["barks", "hums", "sings", "rattles", "rings", "creaks", "roars"],
            adverbs: vec!["loudly", "softly", "twice", "slowly", "nearby", "outside"],
            feature_dim: 12,
            embedding_dim: 16,
        }
    }
}

impl CaptionGrammar {
    /// Every token the grammar can emit.
    pub fn token_set(&self) -> Vec<&'static str> {
        let mut tokens = vec!["a"];
        tokens.extend(&self.subjects);
        tokens.extend(&self.verbs);
        tokens.extend(&self.adverbs);
        tokens
    }
}

/// Per-clip embeddings for both overlap settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipEmbeddings {
    pub none: EmbeddingSequence,
    pub half: EmbeddingSequence,
}

impl ClipEmbeddings {
    pub fn get(&self, overlap: Overlap) -> &EmbeddingSequence {
        match overlap {
            Overlap::None => &self.none,
            Overlap::Half => &self.half,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: CaptionDataset,
    pub validation: CaptionDataset,
    pub evaluation: CaptionDataset,
    pub embeddings: BTreeMap<String, ClipEmbeddings>,
    seed: u64,
    grammar_tokens: Vec<&'static str>,
}

impl SyntheticCorpus {
    pub fn split(&self, split: Split) -> &CaptionDataset {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Evaluation => &self.evaluation,
        }
    }
}

/// Largest-remainder split of `clips` over the 65 / 17.5 / 17.5 proportions,
/// remainder ties resolved toward the later split.
pub fn split_sizes(clips: usize) -> [usize; 3] {
    let proportions = [0.65, 0.175, 0.175];
    let mut sizes = [0usize; 3];
    let mut remainders = [(0.0f64, 0usize); 3];
    let mut assigned = 0;
    for i in 0..3 {
        let quota = clips as f64 * proportions[i];
        sizes[i] = quota.floor() as usize;
        remainders[i] = (quota - quota.floor(), i);
        assigned += sizes[i];
    }
    let mut leftover = clips - assigned;
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.cmp(&a.1)));
    for (_, idx) in remainders {
        if leftover == 0 {
            break;
        }
        sizes[idx] += 1;
        leftover -= 1;
    }
    sizes
}

const MOCK_WINDOW_SECONDS: f32 = 1.0;
const MOCK_FRAME_RATE: f64 = 8.0;

/// Generates `clips` synthetic clips: five identical grammar captions per
/// clip (so one embedding maps to one caption and the corpus is exactly
/// learnable) and one feature sequence per clip whose content encodes the
/// caption semantics, windowed through the mock encoder at both overlaps.
pub fn make_synthetic_corpus(
    seed: u64,
    clips: usize,
    grammar: &CaptionGrammar,
) -> Result<SyntheticCorpus> {
    if clips < 3 {
        return Err(Error::config(format!("need at least 3 clips, got {clips}")));
    }
    let corpus_seed = sub_seed(seed, streams::CORPUS);
    let mut rng = Rng::new(corpus_seed);

    // Codebook vectors per grammar slot value; the embedding content of a
    // clip is the sum of its slot codes.
    let f = grammar.feature_dim;
    let codebook = |count: usize, stream: u64| -> Vec<Vec<f64>> {
        let mut r = Rng::new(sub_seed(corpus_seed, stream));
        (0..count)
            .map(|_| (0..f).map(|_| r.uniform(-1.0, 1.0)).collect())
            .collect()
    };
    let subject_codes = codebook(grammar.subjects.len(), 0x51);
    let verb_codes = codebook(grammar.verbs.len(), 0x52);
    let adverb_codes = codebook(grammar.adverbs.len(), 0x53);

    // Seed-shuffled slot permutations cycled over the clip index: every slot
    // value appears once per cycle, so a train split at least as large as
    // the largest slot covers the whole token set.
    let mut permutation = |count: usize| -> Vec<usize> {
        let mut p: Vec<usize> = (0..count).collect();
        rng.shuffle(&mut p);
        p
    };
    let subject_order = permutation(grammar.subjects.len());
    let verb_order = permutation(grammar.verbs.len());
    let adverb_order = permutation(grammar.adverbs.len());

    let spec = EncoderSpec::mock(grammar.embedding_dim, MOCK_WINDOW_SECONDS);
    let window = (MOCK_WINDOW_SECONDS as f64 * MOCK_FRAME_RATE).round() as usize;
    let [n_train, n_val, _] = split_sizes(clips);

    let mut all_clips = Vec::with_capacity(clips);
    let mut embeddings = BTreeMap::new();
    let mut train_semantics: Vec<(usize, usize, usize)> = Vec::with_capacity(n_train);
    for i in 0..clips {
        let clip_id = format!("clip_{i:04}.wav");
        // Training clips cycle the permuted slot values so the train split
        // covers the grammar; validation and evaluation clips reuse train
        // semantics (fresh framing), keeping the whole corpus learnable
        // from the training split alone.
        let (s, v, a) = if i < n_train {
            let triple = (
                subject_order[i % subject_order.len()],
                verb_order[i % verb_order.len()],
                adverb_order[i % adverb_order.len()],
            );
            train_semantics.push(triple);
            triple
        } else {
            train_semantics[rng.next_below(n_train as u64) as usize]
        };
        let caption =
            format!("a {} {} {}", grammar.subjects[s], grammar.verbs[v], grammar.adverbs[a]);

        let windows = 3 + rng.next_below(3) as usize;
        let frames = windows * window;
        // The clip is three consecutive acoustic segments, one per grammar
        // slot, so window placement (and therefore overlap) matters.
        let mut values = Vec::with_capacity(frames * f);
        for t in 0..frames {
            let code = match 3 * t / frames {
                0 => &subject_codes[s],
                1 => &verb_codes[v],
                _ => &adverb_codes[a],
            };
            let wobble = 1.0 + 0.05 * (t as f64 * 0.7).sin();
            for j in 0..f {
                values.push(code[j] * wobble);
            }
        }
        let features = FeatureSequence::new(values, frames, f, MOCK_FRAME_RATE)?;
        let none = window_embed(&features, &spec, Overlap::None, Pooling::Mean)?;
        let half = window_embed(&features, &spec, Overlap::Half, Pooling::Mean)?;
        embeddings.insert(clip_id.clone(), ClipEmbeddings { none, half });

        all_clips.push(ClipCaptions {
            clip_id,
            captions: std::array::from_fn(|_| caption.clone()),
        });
    }

    let val_end = n_train + n_val;
    let train = CaptionDataset::new(Split::Train, all_clips[..n_train].to_vec())?;
    let validation = CaptionDataset::new(Split::Validation, all_clips[n_train..val_end].to_vec())?;
    let evaluation = CaptionDataset::new(Split::Evaluation, all_clips[val_end..].to_vec())?;

    Ok(SyntheticCorpus {
        train,
        validation,
        evaluation,
        embeddings,
        seed,
        grammar_tokens: grammar.token_set(),
    })
}

impl SyntheticCorpus {
    /// Writes the corpus as a data directory: caption CSVs per split,
    /// embedding files for both overlaps, and word-vector files for every
    /// file-backed source over the grammar's token set.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for split in Split::ALL {
            self.split(split)
                .to_csv(dir.join(format!("captions_{}.csv", split.name())))?;
        }
        let store = crate::data::audio::EmbeddingStore::new(dir);
        for (clip_id, clip) in &self.embeddings {
            store.save(clip_id, &clip.none)?;
            store.save(clip_id, &clip.half)?;
        }

        let vectors_dir = dir.join("word_vectors");
        std::fs::create_dir_all(&vectors_dir)?;
        for source in [
            WordSource::W2v,
            WordSource::Glove,
            WordSource::Fasttext,
            WordSource::CbowClotho,
            WordSource::BertStatic,
        ] {
            let dim = source.required_dim().unwrap();
            let mut rng = Rng::new(sub_seed(
                sub_seed(self.seed, streams::CORPUS),
                0x60 + source.name().len() as u64,
            ));
            let entries: Vec<(String, Vec<f64>)> = self
                .grammar_tokens
                .iter()
                .map(|t| (t.to_string(), random_embedding_row(&mut rng, dim)))
                .collect();
            write_word_vectors(vectors_dir.join(format!("{}.txt", source.name())), &entries)?;
        }
        Ok(())
    }
}
