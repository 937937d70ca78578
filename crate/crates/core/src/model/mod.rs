//! The captioning network: adapter, Transformer decoder, greedy generation.
//!
//! The decoder consumes an adapted audio embedding sequence through
//! cross-attention and previously emitted word embeddings through causally
//! masked self-attention. Each block ends with a linear layer and a layer
//! normalization, and residual connections wrap every sub-layer.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod positional;
pub mod sequence;
pub mod table;

pub use attention::{multi_head_attention, AttentionVars};
pub use config::{AdapterConfig, AdapterKind, DecoderConfig, FeedForwardKind};
pub use positional::positional_encoding;
pub use sequence::{AdaptedSequence, EmbeddingSequence, EncoderId, Overlap};
pub use table::{WordEmbeddingTable, WordSource};

use crate::error::{Error, Result};
use crate::numerics::{Mask, ParamId, ParamSet, Rng, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

fn xavier(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::with_grad(vec![rows, cols], data).unwrap()
}

#[derive(Debug, Clone, Copy)]
struct LinearParams {
    w: ParamId,
    b: ParamId,
}

impl LinearParams {
    fn init(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let w = ps.insert(format!("{name}.w"), xavier(rng, in_dim, out_dim));
        let b = ps.insert(
            format!("{name}.b"),
            Tensor::with_grad(vec![out_dim], vec![0.0; out_dim]).unwrap(),
        );
        LinearParams { w, b }
    }

    fn apply(&self, tape: &mut Tape, ps: &ParamSet, x: Var) -> Result<Var> {
        let w = tape.param(ps, self.w);
        let b = tape.param(ps, self.b);
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerNormParams {
    gain: ParamId,
    bias: ParamId,
}

impl LayerNormParams {
    fn init(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gain = ps.insert(
            format!("{name}.gain"),
            Tensor::with_grad(vec![dim], vec![1.0; dim]).unwrap(),
        );
        let bias = ps.insert(
            format!("{name}.bias"),
            Tensor::with_grad(vec![dim], vec![0.0; dim]).unwrap(),
        );
        LayerNormParams { gain, bias }
    }

    fn apply(&self, tape: &mut Tape, ps: &ParamSet, x: Var) -> Result<Var> {
        let gain = tape.param(ps, self.gain);
        let bias = tape.param(ps, self.bias);
        tape.layer_norm(x, gain, bias, LN_EPS)
    }
}

#[derive(Debug, Clone, Copy)]
struct AttentionParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

impl AttentionParams {
    fn init(ps: &mut ParamSet, name: &str, d_model: usize, kv_dim: usize, rng: &mut Rng) -> Self {
        let zero = |ps: &mut ParamSet, n: String| {
            ps.insert(n, Tensor::with_grad(vec![d_model], vec![0.0; d_model]).unwrap())
        };
        let wq = ps.insert(format!("{name}.wq"), xavier(rng, d_model, d_model));
        let bq = zero(ps, format!("{name}.bq"));
        let wk = ps.insert(format!("{name}.wk"), xavier(rng, kv_dim, d_model));
        let bk = zero(ps, format!("{name}.bk"));
        let wv = ps.insert(format!("{name}.wv"), xavier(rng, kv_dim, d_model));
        let bv = zero(ps, format!("{name}.bv"));
        let wo = ps.insert(format!("{name}.wo"), xavier(rng, d_model, d_model));
        let bo = zero(ps, format!("{name}.bo"));
        AttentionParams { wq, bq, wk, bk, wv, bv, wo, bo }
    }

    fn load(&self, tape: &mut Tape, ps: &ParamSet) -> AttentionVars {
        AttentionVars {
            wq: tape.param(ps, self.wq),
            bq: tape.param(ps, self.bq),
            wk: tape.param(ps, self.wk),
            bk: tape.param(ps, self.bk),
            wv: tape.param(ps, self.wv),
            bv: tape.param(ps, self.bv),
            wo: tape.param(ps, self.wo),
            bo: tape.param(ps, self.bo),
        }
    }
}

#[derive(Debug, Clone)]
enum AdapterParams {
    Identity,
    Mlp {
        l1: LinearParams,
        l2: LinearParams,
    },
    Mha {
        reduce: LinearParams,
        attn: AttentionParams,
        ln1: LayerNormParams,
        ff: LinearParams,
        ln2: LayerNormParams,
    },
}

#[derive(Debug, Clone)]
enum FeedForwardParams {
    Linear(LinearParams),
    TwoLayer { l1: LinearParams, l2: LinearParams },
}

#[derive(Debug, Clone)]
struct BlockParams {
    self_attn: AttentionParams,
    ln1: LayerNormParams,
    cross_attn: AttentionParams,
    ln2: LayerNormParams,
    ff: FeedForwardParams,
    ln3: LayerNormParams,
}

/// The full captioning model: word-embedding table, input projection,
/// adapter, N decoder blocks, and the output projection to vocabulary
/// logits. All parameters live in one `ParamSet` whose insertion order is
/// the checkpoint declaration order.
#[derive(Clone)]
pub struct CaptionModel {
    decoder_cfg: DecoderConfig,
    adapter_cfg: AdapterConfig,
    feature_dim: usize,
    word_source: WordSource,
    word_trainable: bool,
    params: ParamSet,
    table: ParamId,
    input_proj: LinearParams,
    adapter: AdapterParams,
    blocks: Vec<BlockParams>,
    output_proj: LinearParams,
}

impl CaptionModel {
    /// Builds a model around a loaded word-embedding table. Weights are
    /// drawn from `rng` in declaration order, so a seed fixes them exactly.
    pub fn new(
        decoder_cfg: DecoderConfig,
        adapter_cfg: AdapterConfig,
        feature_dim: usize,
        word_table: WordEmbeddingTable,
        rng: &mut Rng,
    ) -> Result<Self> {
        decoder_cfg.validate_resolved()?;
        adapter_cfg.validate(feature_dim, decoder_cfg.model_width)?;
        if word_table.vocab_size() != decoder_cfg.vocab_size {
            return Err(Error::config(format!(
                "word table has {} rows but the vocabulary has {} tokens",
                word_table.vocab_size(),
                decoder_cfg.vocab_size
            )));
        }
        if word_table.dim() != decoder_cfg.word_dim {
            return Err(Error::config(format!(
                "word table is {}-dimensional but word_dim is {}",
                word_table.dim(),
                decoder_cfg.word_dim
            )));
        }

        let d = decoder_cfg.model_width;
        let word_source = word_table.source;
        let word_trainable = word_table.trainable;
        let mut ps = ParamSet::new();

        let mut table_rows = word_table.into_rows();
        let table = if word_trainable {
            table_rows =
                Tensor::with_grad(table_rows.shape().to_vec(), table_rows.data().to_vec())?;
            ps.insert("table", table_rows)
        } else {
            let frozen = Tensor::new(table_rows.shape().to_vec(), table_rows.data().to_vec())?;
            ps.insert("table", frozen)
        };

        let input_proj = LinearParams::init(&mut ps, "input_proj", decoder_cfg.word_dim, d, rng);

        let adapter = match adapter_cfg.kind {
            AdapterKind::Identity => AdapterParams::Identity,
            AdapterKind::Mlp => AdapterParams::Mlp {
                l1: LinearParams::init(&mut ps, "adapter.l1", feature_dim, adapter_cfg.hidden, rng),
                l2: LinearParams::init(
                    &mut ps,
                    "adapter.l2",
                    adapter_cfg.hidden,
                    adapter_cfg.output_dim,
                    rng,
                ),
            },
            AdapterKind::Mha => {
                let out = adapter_cfg.output_dim;
                AdapterParams::Mha {
                    reduce: LinearParams::init(&mut ps, "adapter.reduce", feature_dim, out, rng),
                    attn: AttentionParams::init(&mut ps, "adapter.attn", out, out, rng),
                    ln1: LayerNormParams::init(&mut ps, "adapter.ln1", out),
                    ff: LinearParams::init(&mut ps, "adapter.ff", out, out, rng),
                    ln2: LayerNormParams::init(&mut ps, "adapter.ln2", out),
                }
            }
        };

        let kv_dim = adapter_cfg.output_dim;
        let mut blocks = Vec::with_capacity(decoder_cfg.num_blocks);
        for i in 0..decoder_cfg.num_blocks {
            let p = |suffix: &str| format!("block{i}.{suffix}");
            let self_attn = AttentionParams::init(&mut ps, &p("self_attn"), d, d, rng);
            let ln1 = LayerNormParams::init(&mut ps, &p("ln1"), d);
            let cross_attn = AttentionParams::init(&mut ps, &p("cross_attn"), d, kv_dim, rng);
            let ln2 = LayerNormParams::init(&mut ps, &p("ln2"), d);
            let ff = match decoder_cfg.feed_forward {
                FeedForwardKind::Linear => {
                    FeedForwardParams::Linear(LinearParams::init(&mut ps, &p("ff"), d, d, rng))
                }
                FeedForwardKind::TwoLayerRelu => {
                    let hidden = decoder_cfg.ffn_hidden_or_default();
                    FeedForwardParams::TwoLayer {
                        l1: LinearParams::init(&mut ps, &p("ff.l1"), d, hidden, rng),
                        l2: LinearParams::init(&mut ps, &p("ff.l2"), hidden, d, rng),
                    }
                }
            };
            let ln3 = LayerNormParams::init(&mut ps, &p("ln3"), d);
            blocks.push(BlockParams { self_attn, ln1, cross_attn, ln2, ff, ln3 });
        }

        let output_proj =
            LinearParams::init(&mut ps, "output_proj", d, decoder_cfg.vocab_size, rng);

        Ok(CaptionModel {
            decoder_cfg,
            adapter_cfg,
            feature_dim,
            word_source,
            word_trainable,
            params: ps,
            table,
            input_proj,
            adapter,
            blocks,
            output_proj,
        })
    }

    pub fn decoder_config(&self) -> &DecoderConfig {
        &self.decoder_cfg
    }

    pub fn adapter_config(&self) -> &AdapterConfig {
        &self.adapter_cfg
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn word_source(&self) -> WordSource {
        self.word_source
    }

    pub fn word_trainable(&self) -> bool {
        self.word_trainable
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.params.trainable_ids()
    }

    /// Current word-embedding table rows.
    pub fn table_rows(&self) -> &Tensor {
        self.params.get(self.table)
    }

    // ── Tape-level forward passes ───────────────────────────────────

    /// Adapter stage Z -> Z'. The identity variant returns its input node.
    pub fn adapter_on_tape(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let t_prime = match tape.shape(z) {
            [t, f] if *f == self.feature_dim => *t,
            other => {
                return Err(Error::shape(format!(
                    "adapter input must be [T', {}], got {other:?}",
                    self.feature_dim
                )))
            }
        };
        match &self.adapter {
            AdapterParams::Identity => Ok(z),
            AdapterParams::Mlp { l1, l2 } => {
                let h = l1.apply(tape, &self.params, z)?;
                let h = tape.relu(h);
                l2.apply(tape, &self.params, h)
            }
            AdapterParams::Mha { reduce, attn, ln1, ff, ln2 } => {
                let x = reduce.apply(tape, &self.params, z)?;
                let pe = positional_encoding(t_prime, self.adapter_cfg.output_dim)?;
                let pe = tape.constant(&pe);
                let x = tape.add(x, pe)?;
                let vars = attn.load(tape, &self.params);
                let attended =
                    multi_head_attention(tape, x, x, &vars, self.adapter_cfg.heads, None)?;
                let x = tape.add(x, attended)?;
                let x = ln1.apply(tape, &self.params, x)?;
                let ffed = ff.apply(tape, &self.params, x)?;
                let y = tape.add(x, ffed)?;
                ln2.apply(tape, &self.params, y)
            }
        }
    }

    fn feed_forward_on_tape(&self, tape: &mut Tape, ff: &FeedForwardParams, x: Var) -> Result<Var> {
        match ff {
            FeedForwardParams::Linear(l) => l.apply(tape, &self.params, x),
            FeedForwardParams::TwoLayer { l1, l2 } => {
                let h = l1.apply(tape, &self.params, x)?;
                let h = tape.relu(h);
                l2.apply(tape, &self.params, h)
            }
        }
    }

    fn maybe_dropout(
        &self,
        tape: &mut Tape,
        x: Var,
        rng: &mut Option<&mut Rng>,
    ) -> Result<Var> {
        let rate = self.decoder_cfg.dropout;
        let Some(r) = rng.as_deref_mut() else { return Ok(x) };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let shape = tape.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> =
            (0..n).map(|_| if r.next_f64() < keep { 1.0 / keep } else { 0.0 }).collect();
        let mask = tape.constant_from(shape, mask)?;
        tape.mul(x, mask)
    }

    /// Decoder stage: projected word embeddings with positional encoding,
    /// then N blocks of causal self-attention, cross-attention over Z', and
    /// a linear layer with layer normalization; finally the vocabulary
    /// projection. Row k of the output depends only on embedding rows <= k.
    pub fn decoder_on_tape(
        &self,
        tape: &mut Tape,
        zprime: Var,
        embeddings: Var,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let k = match tape.shape(embeddings) {
            [k, w] if *w == self.decoder_cfg.word_dim => *k,
            other => {
                return Err(Error::shape(format!(
                    "decoder input must be [K, {}], got {other:?}",
                    self.decoder_cfg.word_dim
                )))
            }
        };
        if k > self.decoder_cfg.max_caption_len {
            return Err(Error::config(format!(
                "caption length {k} exceeds max_caption_len {}",
                self.decoder_cfg.max_caption_len
            )));
        }
        match tape.shape(zprime) {
            [_, f] if *f == self.adapter_cfg.output_dim => {}
            other => {
                return Err(Error::shape(format!(
                    "cross-attention memory must be [T', {}], got {other:?}",
                    self.adapter_cfg.output_dim
                )))
            }
        }

        let d = self.decoder_cfg.model_width;
        let mut x = self.input_proj.apply(tape, &self.params, embeddings)?;
        let pe = positional_encoding(k, d)?;
        let pe = tape.constant(&pe);
        x = tape.add(x, pe)?;

        let causal = Mask::causal(k);
        for block in &self.blocks {
            let vars = block.self_attn.load(tape, &self.params);
            let sa =
                multi_head_attention(tape, x, x, &vars, self.decoder_cfg.heads, Some(&causal))?;
            let sa = self.maybe_dropout(tape, sa, &mut dropout_rng)?;
            let sum = tape.add(x, sa)?;
            x = block.ln1.apply(tape, &self.params, sum)?;

            let vars = block.cross_attn.load(tape, &self.params);
            let ca = multi_head_attention(tape, x, zprime, &vars, self.decoder_cfg.heads, None)?;
            let ca = self.maybe_dropout(tape, ca, &mut dropout_rng)?;
            let sum = tape.add(x, ca)?;
            x = block.ln2.apply(tape, &self.params, sum)?;

            let ff = self.feed_forward_on_tape(tape, &block.ff, x)?;
            let ff = self.maybe_dropout(tape, ff, &mut dropout_rng)?;
            let sum = tape.add(x, ff)?;
            x = block.ln3.apply(tape, &self.params, sum)?;
        }

        self.output_proj.apply(tape, &self.params, x)
    }

    /// Teacher-forced loss of one caption against one clip: embeds the
    /// ground-truth prefix (with the zero start row), runs the full
    /// adapter + decoder stack, and returns the pad-masked cross-entropy.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        z: &EmbeddingSequence,
        input_tokens: &[usize],
        targets: &[usize],
        mask: &[bool],
        dropout_rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let zc = tape.constant(&z.to_tensor());
        let zprime = self.adapter_on_tape(tape, zc)?;
        let table = tape.param(&self.params, self.table);
        let emb = tape.embed_tokens(table, input_tokens)?;
        let logits = self.decoder_on_tape(tape, zprime, emb, dropout_rng)?;
        tape.cross_entropy_masked(logits, targets, mask)
    }

    // ── Value-level conveniences ────────────────────────────────────

    /// Z -> Z' without gradient tracking.
    pub fn apply_adapter(&self, z: &EmbeddingSequence) -> Result<AdaptedSequence> {
        let mut tape = Tape::new();
        let zc = tape.constant(&z.to_tensor());
        let out = self.adapter_on_tape(&mut tape, zc)?;
        Ok(AdaptedSequence { values: tape.to_tensor(out) })
    }

    /// Logits for explicit input embeddings, without gradient tracking.
    pub fn decoder_forward(
        &self,
        zprime: &AdaptedSequence,
        embeddings: &Tensor,
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let zc = tape.constant(&zprime.values);
        let ec = tape.constant(embeddings);
        let logits = self.decoder_on_tape(&mut tape, zc, ec, None)?;
        Ok(tape.to_tensor(logits))
    }

    /// Greedy generation: feed the zero start embedding, then the embedding
    /// of each argmax token, until the end token or the length cap. The
    /// returned sequence excludes the virtual start position and includes
    /// the end token when it was produced.
    pub fn greedy_decode(
        &self,
        zprime: &AdaptedSequence,
        end_token: usize,
    ) -> Result<Vec<usize>> {
        let mut tokens: Vec<usize> = Vec::new();
        loop {
            let mut tape = Tape::new();
            let zc = tape.constant(&zprime.values);
            let table = tape.param(&self.params, self.table);
            let emb = tape.embed_tokens(table, &tokens)?;
            let logits = self.decoder_on_tape(&mut tape, zc, emb, None)?;
            let w = self.decoder_cfg.vocab_size;
            let last = &tape.value(logits)[tokens.len() * w..(tokens.len() + 1) * w];
            let next = argmax(last);
            tokens.push(next);
            if next == end_token || tokens.len() >= self.decoder_cfg.max_caption_len {
                return Ok(tokens);
            }
        }
    }
}

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
