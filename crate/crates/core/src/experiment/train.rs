//! The training protocol: teacher forcing, Adam, per-epoch validation loss,
//! and early stopping with best-checkpoint restoration.

use std::collections::BTreeMap;

use crate::data::captions::{CaptionDataset, Split};
use crate::data::tokenize::tokenize_caption;
use crate::data::vocab::{Vocabulary, END_INDEX};
use crate::data::word_vectors::load_word_embedding_table;
use crate::data::DataDir;
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::model::sequence::EmbeddingSequence;
use crate::model::table::WordEmbeddingTable;
use crate::model::CaptionModel;
use crate::numerics::rng::{streams, sub_seed, Rng};
use crate::numerics::{Adam, Tape};

/// Vocabulary pruning threshold used throughout.
pub const MIN_COUNT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Patience-based stopping: an epoch improves only when its validation loss
/// is strictly lower than the best so far; ties do not reset the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, since_improvement: 0 }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        StopDecision { improved, stop: self.since_improvement >= self.patience }
    }
}

/// One teacher-forced example: the ground-truth prefix fed to the decoder
/// and the shifted targets ending in the end token.
#[derive(Debug, Clone)]
struct PreparedExample {
    clip_id: String,
    input_tokens: Vec<usize>,
    targets: Vec<usize>,
}

pub struct TrainingOutput {
    /// The model restored to the epoch with the lowest validation loss.
    pub best_model: CaptionModel,
    /// Parameters as they were when training stopped.
    pub final_model: CaptionModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub vocab: Vocabulary,
    /// Input configuration with vocabulary size and word width resolved.
    pub resolved: ExperimentConfig,
    pub feature_dim: usize,
}

fn prepare_examples(
    dataset: &CaptionDataset,
    vocab: &Vocabulary,
    max_caption_len: usize,
) -> Result<Vec<PreparedExample>> {
    let mut prepared = Vec::with_capacity(dataset.example_count());
    for (clip_id, caption) in dataset.examples() {
        let mut tokens = vocab.encode(&tokenize_caption(caption)?);
        tokens.truncate(max_caption_len - 1);
        let mut targets = tokens.clone();
        targets.push(END_INDEX);
        prepared.push(PreparedExample {
            clip_id: clip_id.to_string(),
            input_tokens: tokens,
            targets,
        });
    }
    Ok(prepared)
}

fn load_clip_embeddings(
    cfg: &ExperimentConfig,
    data: &DataDir,
    datasets: &[&CaptionDataset],
) -> Result<BTreeMap<String, EmbeddingSequence>> {
    let store = data.store();
    let mut ids: Vec<&str> = Vec::new();
    for ds in datasets {
        ids.extend(ds.clip_ids());
    }
    store.verify_clips(cfg.encoder_id, cfg.overlap, ids.iter().copied())?;
    let mut map = BTreeMap::new();
    let mut feature_dim = None;
    for id in ids {
        if map.contains_key(id) {
            continue;
        }
        let seq = store.load(cfg.encoder_id, cfg.overlap, id)?;
        match feature_dim {
            None => feature_dim = Some(seq.f_prime()),
            Some(f) if f != seq.f_prime() => {
                return Err(Error::format(format!(
                    "clip {id} has {} features, earlier clips had {f}",
                    seq.f_prime()
                )))
            }
            _ => {}
        }
        map.insert(id.to_string(), seq);
    }
    Ok(map)
}

fn build_word_table(
    cfg: &ExperimentConfig,
    data: &DataDir,
    vocab: &Vocabulary,
) -> Result<WordEmbeddingTable> {
    if cfg.word_source.file_backed() {
        load_word_embedding_table(
            data.word_vectors_path(cfg.word_source),
            vocab,
            cfg.word_source,
            cfg.fine_tune,
            cfg.seed,
        )
    } else {
        WordEmbeddingTable::random(
            vocab.len(),
            cfg.decoder.word_dim,
            cfg.word_source,
            cfg.fine_tune,
            &mut Rng::from_stream(cfg.seed, streams::WORD_TABLE),
        )
    }
}

/// Pad-masked mean token cross-entropy over a whole example set, computed
/// with teacher forcing and no parameter updates.
fn split_loss(
    model: &CaptionModel,
    examples: &[PreparedExample],
    embeddings: &BTreeMap<String, EmbeddingSequence>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in examples {
        let mut tape = Tape::new();
        let mask = vec![true; ex.targets.len()];
        let loss = model.loss_on_tape(
            &mut tape,
            &embeddings[&ex.clip_id],
            &ex.input_tokens,
            &ex.targets,
            &mask,
            None,
        )?;
        total += tape.scalar(loss) * ex.targets.len() as f64;
        tokens += ex.targets.len();
    }
    Ok(total / tokens as f64)
}

/// Trains one setting on one seed. Each epoch seed-shuffles the training
/// pairs, runs teacher-forced minibatches (the final partial batch is
/// kept), applies one Adam update per batch, and measures the validation
/// loss; training stops after `patience` epochs without improvement or at
/// `max_epochs`, and the best checkpoint is restored into `best_model`.
pub fn run_training(cfg: &ExperimentConfig, data: &DataDir) -> Result<TrainingOutput> {
    cfg.validate()?;
    let train = data.load_split(Split::Train)?;
    if train.clips().is_empty() {
        return Err(Error::Empty("train split".to_string()));
    }
    let validation = data.load_split(Split::Validation)?;
    if validation.clips().is_empty() {
        return Err(Error::Empty("validation split".to_string()));
    }

    let vocab = Vocabulary::build(&train, MIN_COUNT)?;
    let embeddings = load_clip_embeddings(cfg, data, &[&train, &validation])?;
    let feature_dim = embeddings.values().next().map(|s| s.f_prime()).unwrap();
    let table = build_word_table(cfg, data, &vocab)?;

    let mut resolved = cfg.clone();
    resolved.decoder.vocab_size = vocab.len();
    resolved.decoder.word_dim = table.dim();

    let mut model = CaptionModel::new(
        resolved.decoder,
        resolved.adapter,
        feature_dim,
        table,
        &mut Rng::from_stream(cfg.seed, streams::INIT),
    )?;

    let train_examples = prepare_examples(&train, &vocab, resolved.decoder.max_caption_len)?;
    let val_examples = prepare_examples(&validation, &vocab, resolved.decoder.max_caption_len)?;

    let trainable = model.trainable_ids();
    let mut adam = Adam::new(resolved.optimizer, model.params(), &trainable);
    let mut stopping = EarlyStopping::new(resolved.patience);
    let mut dropout_rng = Rng::from_stream(cfg.seed, streams::DROPOUT);
    let use_dropout = resolved.decoder.dropout > 0.0;

    let shuffle_seed = sub_seed(cfg.seed, streams::SHUFFLE);
    let mut log = Vec::new();
    let mut best_snapshot = model.clone();
    let mut stopped_epoch = 0;

    for epoch in 1..=resolved.max_epochs {
        let mut order: Vec<usize> = (0..train_examples.len()).collect();
        Rng::new(sub_seed(shuffle_seed, epoch as u64)).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(resolved.batch_size) {
            let batch_tokens: usize =
                batch.iter().map(|&i| train_examples[i].targets.len()).sum();
            model.params_mut().zero_grads();
            let mut tape = Tape::new();
            let mut acc = None;
            for &i in batch {
                let ex = &train_examples[i];
                let mask = vec![true; ex.targets.len()];
                let loss = model.loss_on_tape(
                    &mut tape,
                    &embeddings[&ex.clip_id],
                    &ex.input_tokens,
                    &ex.targets,
                    &mask,
                    if use_dropout { Some(&mut dropout_rng) } else { None },
                )?;
                let weighted =
                    tape.mul_scalar(loss, ex.targets.len() as f64 / batch_tokens as f64);
                acc = Some(match acc {
                    None => weighted,
                    Some(prev) => tape.add(prev, weighted)?,
                });
            }
            let batch_loss = acc.expect("batches are never empty");
            let loss_value = tape.scalar(batch_loss);
            if !loss_value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    msg: format!("batch loss {loss_value}"),
                });
            }
            tape.backward(batch_loss, model.params_mut())?;
            adam.step(model.params_mut(), &trainable)?;
            epoch_loss += loss_value * batch_tokens as f64;
            epoch_tokens += batch_tokens;
        }
        let train_loss = epoch_loss / epoch_tokens as f64;

        let val_loss = split_loss(&model, &val_examples, &embeddings)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch, msg: format!("validation loss {val_loss}") });
        }
        log.push(EpochRecord { epoch, train_loss, val_loss });

        let decision = stopping.observe(epoch, val_loss);
        if decision.improved {
            best_snapshot = model.clone();
        }
        stopped_epoch = epoch;
        if decision.stop {
            break;
        }
        if let Some(threshold) = resolved.stop_when_train_loss_below {
            if train_loss < threshold {
                break;
            }
        }
    }

    Ok(TrainingOutput {
        best_model: best_snapshot,
        final_model: model,
        log,
        best_epoch: stopping.best_epoch(),
        stopped_epoch,
        vocab,
        resolved,
        feature_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_improve_then_flat_stops_at_patience() {
        // Strict improvement for 3 epochs, flat after: with patience 10 the
        // counter reaches 10 at epoch 13 and the best checkpoint is epoch 3.
        let mut stopping = EarlyStopping::new(10);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            let val = if epoch <= 3 { 1.0 - 0.1 * epoch as f64 } else { 0.7 };
            if stopping.observe(epoch, val).stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(13));
        assert_eq!(stopping.best_epoch(), 3);
    }

    #[test]
    fn ties_do_not_reset_patience() {
        let mut stopping = EarlyStopping::new(2);
        assert!(!stopping.observe(1, 0.5).stop);
        let tie = stopping.observe(2, 0.5);
        assert!(!tie.improved);
        assert!(!tie.stop);
        assert!(stopping.observe(3, 0.5).stop);
        assert_eq!(stopping.best_epoch(), 1);
    }

    #[test]
    fn late_improvement_extends_training() {
        let mut stopping = EarlyStopping::new(3);
        let losses = [1.0, 0.9, 0.95, 0.97, 0.85, 0.9, 0.9, 0.9];
        let mut stopped_at = None;
        for (i, &loss) in losses.iter().enumerate() {
            if stopping.observe(i + 1, loss).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(8)); // best at 5, patience 3 -> 8
        assert_eq!(stopping.best_epoch(), 5);
    }

    #[test]
    fn strictly_worsening_stops_after_exactly_patience_epochs() {
        let mut stopping = EarlyStopping::new(4);
        assert!(!stopping.observe(1, 1.0).stop);
        for epoch in 2..=4 {
            assert!(!stopping.observe(epoch, 1.0 + epoch as f64).stop);
        }
        assert!(stopping.observe(5, 10.0).stop);
        assert_eq!(stopping.best_epoch(), 1);
    }
}
