//! Evaluation of a trained model: one greedy caption per clip, scored with
//! CIDEr-D against the clip's five references.

use crate::data::captions::CaptionDataset;
use crate::data::tokenize::tokenize_caption;
use crate::data::vocab::{Vocabulary, END_INDEX};
use crate::data::EmbeddingStore;
use crate::error::{Error, Result};
use crate::metrics::cider::{cider_d, CorpusDf};
use crate::metrics::{ExampleScore, ScoreReport};
use crate::model::sequence::{EncoderId, Overlap};
use crate::model::CaptionModel;

pub struct EvalContext<'a> {
    pub store: &'a EmbeddingStore,
    pub encoder: EncoderId,
    pub overlap: Overlap,
    pub setting_id: String,
    pub seed: u64,
}

pub fn evaluate_model(
    model: &CaptionModel,
    vocab: &Vocabulary,
    eval: &CaptionDataset,
    ctx: &EvalContext,
) -> Result<ScoreReport> {
    if vocab.len() != model.decoder_config().vocab_size {
        return Err(Error::config(format!(
            "vocabulary has {} tokens but the checkpoint was trained with {}",
            vocab.len(),
            model.decoder_config().vocab_size
        )));
    }
    if eval.clips().is_empty() {
        return Err(Error::Empty("evaluation split".to_string()));
    }
    ctx.store.verify_clips(ctx.encoder, ctx.overlap, eval.clip_ids())?;

    // Document frequencies over the full reference set of the corpus.
    let reference_sets: Vec<Vec<Vec<String>>> = eval
        .clips()
        .iter()
        .map(|clip| {
            clip.captions
                .iter()
                .map(|c| tokenize_caption(c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let df = CorpusDf::build(&reference_sets);

    let mut per_example = Vec::with_capacity(eval.clips().len());
    for (clip, refs) in eval.clips().iter().zip(&reference_sets) {
        let z = ctx.store.load(ctx.encoder, ctx.overlap, &clip.clip_id)?;
        let zprime = model.apply_adapter(&z)?;
        let tokens = model.greedy_decode(&zprime, END_INDEX)?;
        let candidate: Vec<String> = vocab
            .decode_until_end(&tokens)
            .into_iter()
            .map(str::to_string)
            .collect();
        let score = cider_d(&candidate, refs, &df)?;
        per_example.push(ExampleScore { clip_id: clip.clip_id.clone(), cider_d: score });
    }
    ScoreReport::new(ctx.setting_id.clone(), ctx.seed, per_example)
}
