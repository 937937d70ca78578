//! Multi-head scaled dot-product attention on the tape.

use crate::error::{Error, Result};
use crate::numerics::{Mask, Tape, Var};

/// Projection tensors for one attention layer, already loaded on a tape.
/// `wq` maps the query width to the model width; `wk`/`wv` map the
/// key/value width (which may differ, e.g. cross-attention over raw audio
/// embeddings) to the model width; `wo` projects the concatenated heads.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product attention with `heads` heads: per-head softmax of
/// Q Kᵀ / sqrt(head_dim) over the keys, masked positions receiving exactly
/// zero weight, heads concatenated and linearly projected back.
pub fn multi_head_attention(
    tape: &mut Tape,
    queries: Var,
    keys_values: Var,
    vars: &AttentionVars,
    heads: usize,
    mask: Option<&Mask>,
) -> Result<Var> {
    let (lq, _) = match tape.shape(queries) {
        [r, c] => (*r, *c),
        other => return Err(Error::shape(format!("attention queries must be 2-D, got {other:?}"))),
    };
    let lk = match tape.shape(keys_values) {
        [r, _] => *r,
        other => return Err(Error::shape(format!("attention keys must be 2-D, got {other:?}"))),
    };
    let d = tape.shape(vars.wq)[1];
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(format!("width {d} not divisible into {heads} heads")));
    }
    let head_dim = d / heads;

    if let Some(m) = mask {
        if (m.rows(), m.cols()) != (lq, lk) {
            return Err(Error::shape(format!(
                "attention mask {}x{} vs scores {lq}x{lk}",
                m.rows(),
                m.cols()
            )));
        }
        for r in 0..lq {
            if !m.row_has_visible(r) {
                return Err(Error::shape(format!("attention mask row {r} allows no position")));
            }
        }
    }

    let q0 = tape.matmul(queries, vars.wq)?;
    let q = tape.add_row(q0, vars.bq)?;
    let k0 = tape.matmul(keys_values, vars.wk)?;
    let k = tape.add_row(k0, vars.bk)?;
    let v0 = tape.matmul(keys_values, vars.wv)?;
    let v = tape.add_row(v0, vars.bv)?;

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * head_dim, head_dim)?;
        let kh = tape.slice_cols(k, h * head_dim, head_dim)?;
        let vh = tape.slice_cols(v, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh)?;
        let raw = tape.matmul(qh, kt)?;
        let scores = tape.mul_scalar(raw, scale);
        let weights = match mask {
            Some(m) => tape.masked_softmax(scores, 1, m)?,
            None => tape.softmax(scores, 1)?,
        };
        head_outputs.push(tape.matmul(weights, vh)?);
    }
    let concat = tape.concat_cols(&head_outputs)?;
    let out = tape.matmul(concat, vars.wo)?;
    tape.add_row(out, vars.bo)
}
