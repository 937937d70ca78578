use super::*;
use crate::numerics::Adam;
use crate::numerics::OptimizerConfig;

fn tiny_decoder_cfg() -> DecoderConfig {
    DecoderConfig {
        num_blocks: 1,
        heads: 2,
        head_dim: 4,
        model_width: 8,
        max_caption_len: 6,
        vocab_size: 5,
        word_dim: 4,
        feed_forward: FeedForwardKind::Linear,
        ffn_hidden: 0,
        dropout: 0.0,
    }
}

fn adapter_cfg(kind: AdapterKind, feature_dim: usize, width: usize) -> AdapterConfig {
    match kind {
        AdapterKind::Identity => AdapterConfig {
            kind,
            hidden: 0,
            heads: 0,
            head_dim: 0,
            output_dim: feature_dim,
        },
        AdapterKind::Mlp => AdapterConfig { kind, hidden: 5, heads: 0, head_dim: 0, output_dim: width },
        AdapterKind::Mha => AdapterConfig {
            kind,
            hidden: 0,
            heads: 2,
            head_dim: width / 2,
            output_dim: width,
        },
    }
}

fn tiny_model(kind: AdapterKind, trainable_table: bool, seed: u64) -> CaptionModel {
    let decoder = tiny_decoder_cfg();
    let feature_dim = 6;
    let adapter = adapter_cfg(kind, feature_dim, decoder.model_width);
    let table = WordEmbeddingTable::random(
        decoder.vocab_size,
        decoder.word_dim,
        WordSource::Scratch,
        trainable_table,
        &mut Rng::new(seed ^ 0xABCD),
    )
    .unwrap();
    CaptionModel::new(decoder, adapter, feature_dim, table, &mut Rng::new(seed)).unwrap()
}

fn mock_sequence(t: usize, f: usize, seed: u64) -> EmbeddingSequence {
    let mut rng = Rng::new(seed);
    let values: Vec<f32> = (0..t * f).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    EmbeddingSequence::new(values, t, f, EncoderId::Mock, Overlap::None, 1.0, 1.0).unwrap()
}

fn input_rows(model: &CaptionModel, tokens: &[usize]) -> Tensor {
    // Zero start row plus table rows, same as the tape-level embedding.
    let table = model.table_rows();
    let dim = table.shape()[1];
    let mut data = vec![0.0; (tokens.len() + 1) * dim];
    for (i, &t) in tokens.iter().enumerate() {
        data[(i + 1) * dim..(i + 2) * dim].copy_from_slice(&table.data()[t * dim..(t + 1) * dim]);
    }
    Tensor::new(vec![tokens.len() + 1, dim], data).unwrap()
}

#[test]
fn identity_adapter_is_bit_exact() {
    let model = tiny_model(AdapterKind::Identity, true, 3);
    let z = mock_sequence(4, 6, 17);
    let adapted = model.apply_adapter(&z).unwrap();
    assert_eq!(adapted.values, z.to_tensor());
    assert_eq!(adapted.t_prime(), 4);
    assert_eq!(adapted.dim(), 6);
}

#[test]
fn identity_adapter_equals_skipping_the_stage() {
    let model = tiny_model(AdapterKind::Identity, true, 3);
    let z = mock_sequence(3, 6, 17);
    let emb = input_rows(&model, &[2, 4]);
    let through_adapter = model
        .decoder_forward(&model.apply_adapter(&z).unwrap(), &emb)
        .unwrap();
    let direct = model
        .decoder_forward(&AdaptedSequence { values: z.to_tensor() }, &emb)
        .unwrap();
    assert_eq!(through_adapter, direct);
}

#[test]
fn mlp_adapter_with_zero_weights_emits_zeros() {
    let mut model = tiny_model(AdapterKind::Mlp, true, 5);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        if model.params().name(id).starts_with("adapter.") {
            model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let z = mock_sequence(3, 6, 23);
    let adapted = model.apply_adapter(&z).unwrap();
    assert_eq!(adapted.values.shape(), &[3, 8]);
    assert!(adapted.values.data().iter().all(|&v| v == 0.0));
}

#[test]
fn mlp_adapter_commutes_with_row_permutation() {
    let model = tiny_model(AdapterKind::Mlp, true, 7);
    let z = mock_sequence(4, 6, 29);
    let adapted = model.apply_adapter(&z).unwrap();

    // Reverse the rows of the input; outputs must be the same rows reversed.
    let mut rev = Vec::with_capacity(z.values().len());
    for r in (0..4).rev() {
        rev.extend_from_slice(&z.values()[r * 6..(r + 1) * 6]);
    }
    let z_rev =
        EmbeddingSequence::new(rev, 4, 6, EncoderId::Mock, Overlap::None, 1.0, 1.0).unwrap();
    let adapted_rev = model.apply_adapter(&z_rev).unwrap();

    let d = adapted.dim();
    for r in 0..4 {
        assert_eq!(
            &adapted.values.data()[r * d..(r + 1) * d],
            &adapted_rev.values.data()[(3 - r) * d..(4 - r) * d],
            "row {r}"
        );
    }
}

#[test]
fn mha_adapter_breaks_row_permutation_equivariance() {
    // Positional encoding makes the MHA adapter order-sensitive: permuting
    // the input rows must not merely permute the output rows.
    let model = tiny_model(AdapterKind::Mha, true, 11);
    let mut found_counterexample = false;
    for seed in 0..20u64 {
        let z = mock_sequence(4, 6, 1000 + seed);
        let adapted = model.apply_adapter(&z).unwrap();
        let mut rev = Vec::with_capacity(z.values().len());
        for r in (0..4).rev() {
            rev.extend_from_slice(&z.values()[r * 6..(r + 1) * 6]);
        }
        let z_rev =
            EmbeddingSequence::new(rev, 4, 6, EncoderId::Mock, Overlap::None, 1.0, 1.0).unwrap();
        let adapted_rev = model.apply_adapter(&z_rev).unwrap();
        let d = adapted.dim();
        let permuted_equal = (0..4).all(|r| {
            adapted.values.data()[r * d..(r + 1) * d]
                .iter()
                .zip(&adapted_rev.values.data()[(3 - r) * d..(4 - r) * d])
                .all(|(a, b)| (a - b).abs() < 1e-9)
        });
        if !permuted_equal {
            found_counterexample = true;
            break;
        }
    }
    assert!(found_counterexample, "mha adapter behaved like a per-row map");
    let z = mock_sequence(5, 6, 77);
    let adapted = model.apply_adapter(&z).unwrap();
    assert_eq!(adapted.values.shape(), &[5, 8]);
}

#[test]
fn decoder_is_causal_to_the_last_bit() {
    let model = tiny_model(AdapterKind::Identity, true, 13);
    let z = mock_sequence(3, 6, 31);
    let zprime = model.apply_adapter(&z).unwrap();
    let tokens = [2, 3, 4, 1];
    let base_emb = input_rows(&model, &tokens);
    let base = model.decoder_forward(&zprime, &base_emb).unwrap();
    let w = model.decoder_config().vocab_size;

    let mut rng = Rng::new(555);
    for k in 1..tokens.len() + 1 {
        let mut emb = base_emb.clone();
        let dim = emb.shape()[1];
        for j in 0..dim {
            emb.data_mut()[k * dim + j] += rng.uniform(-2.0, 2.0);
        }
        let perturbed = model.decoder_forward(&zprime, &emb).unwrap();
        assert_eq!(
            &base.data()[..k * w],
            &perturbed.data()[..k * w],
            "perturbing row {k} leaked into earlier logits"
        );
    }
}

#[test]
fn single_step_forward_is_finite_and_shaped() {
    let model = tiny_model(AdapterKind::Mha, true, 19);
    let z = mock_sequence(2, 6, 41);
    let zprime = model.apply_adapter(&z).unwrap();
    let emb = input_rows(&model, &[]);
    let logits = model.decoder_forward(&zprime, &emb).unwrap();
    assert_eq!(logits.shape(), &[1, 5]);
    assert!(logits.is_finite());
}

#[test]
fn caption_length_cap_is_enforced() {
    let model = tiny_model(AdapterKind::Identity, true, 23);
    let z = mock_sequence(2, 6, 43);
    let zprime = model.apply_adapter(&z).unwrap();
    let emb = input_rows(&model, &[1, 2, 3, 4, 2, 3]); // K = 7 > 6
    assert!(model.decoder_forward(&zprime, &emb).is_err());
}

#[test]
fn cross_attention_feels_the_audio_everywhere() {
    let model = tiny_model(AdapterKind::Identity, true, 29);
    let z = mock_sequence(3, 6, 47);
    let zprime = model.apply_adapter(&z).unwrap();
    let emb = input_rows(&model, &[2, 3, 4]);
    let base = model.decoder_forward(&zprime, &emb).unwrap();

    let mut shifted = zprime.clone();
    shifted.values.data_mut()[0] += 0.5;
    let moved = model.decoder_forward(&shifted, &emb).unwrap();

    let w = model.decoder_config().vocab_size;
    for k in 0..4 {
        let row_changed = (0..w).any(|j| base.data()[k * w + j] != moved.data()[k * w + j]);
        assert!(row_changed, "logit row {k} ignored the audio memory");
    }
}

#[test]
fn greedy_stops_at_end_token_ranked_first() {
    let end = 1;
    let mut model = tiny_model(AdapterKind::Identity, true, 31);
    // Force the output projection to always rank the end token first.
    let w_id = model.output_proj.w;
    let b_id = model.output_proj.b;
    model.params_mut().get_mut(w_id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    let bias = model.params_mut().get_mut(b_id).data_mut();
    bias.iter_mut().for_each(|v| *v = 0.0);
    bias[end] = 5.0;
    let z = mock_sequence(2, 6, 53);
    let zprime = model.apply_adapter(&z).unwrap();
    let out = model.greedy_decode(&zprime, end).unwrap();
    assert_eq!(out, vec![end]);
}

#[test]
fn greedy_hits_the_length_cap_without_end() {
    let end = 1;
    let mut model = tiny_model(AdapterKind::Identity, true, 37);
    let b_id = model.output_proj.b;
    model.params_mut().get_mut(b_id).data_mut()[end] = -1e6;
    let z = mock_sequence(2, 6, 59);
    let zprime = model.apply_adapter(&z).unwrap();
    let out = model.greedy_decode(&zprime, end).unwrap();
    assert_eq!(out.len(), model.decoder_config().max_caption_len);
    assert!(out.iter().all(|&t| t != end));
}

#[test]
fn greedy_is_deterministic() {
    let model = tiny_model(AdapterKind::Mha, true, 41);
    let z = mock_sequence(3, 6, 61);
    let zprime = model.apply_adapter(&z).unwrap();
    let a = model.greedy_decode(&zprime, 1).unwrap();
    let b = model.greedy_decode(&zprime, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frozen_table_stays_bit_identical_through_a_training_step() {
    let mut model = tiny_model(AdapterKind::Mlp, false, 43);
    let before = model.table_rows().data().to_vec();
    let z = mock_sequence(3, 6, 67);
    let trainable = model.trainable_ids();
    assert!(!trainable.contains(&model.table));

    let mut adam = Adam::new(OptimizerConfig::default(), model.params(), &trainable);
    for _ in 0..3 {
        model.params_mut().zero_grads();
        let mut tape = Tape::new();
        let loss = model
            .loss_on_tape(&mut tape, &z, &[2, 3], &[2, 3, 1], &[true, true, true], None)
            .unwrap();
        tape.backward(loss, model.params_mut()).unwrap();
        adam.step(model.params_mut(), &trainable).unwrap();
    }
    assert_eq!(model.table_rows().data(), &before[..]);
}

#[test]
fn trainable_table_moves_after_one_step() {
    let mut model = tiny_model(AdapterKind::Mlp, true, 47);
    let before = model.table_rows().data().to_vec();
    let z = mock_sequence(3, 6, 71);
    let trainable = model.trainable_ids();
    assert!(trainable.contains(&model.table));

    let mut adam = Adam::new(OptimizerConfig::default(), model.params(), &trainable);
    model.params_mut().zero_grads();
    let mut tape = Tape::new();
    let loss = model
        .loss_on_tape(&mut tape, &z, &[2, 3], &[2, 3, 1], &[true, true, true], None)
        .unwrap();
    tape.backward(loss, model.params_mut()).unwrap();
    adam.step(model.params_mut(), &trainable).unwrap();
    assert_ne!(model.table_rows().data(), &before[..]);
}

/// Finite-difference oracle over every parameter of the tiny model, one run
/// per adapter kind: analytic gradients from the tape must match central
/// differences at step 1e-5 within relative error 1e-4.
#[test]
fn end_to_end_gradients_match_finite_differences() {
    for kind in AdapterKind::ALL {
        let mut model = tiny_model(kind, true, 53);
        let z = mock_sequence(3, 6, 73);
        let tokens = [2, 3, 4];
        let targets = [2, 3, 4, 1];
        let mask = [true, true, true, true];

        model.params_mut().zero_grads();
        let mut tape = Tape::new();
        let loss = model
            .loss_on_tape(&mut tape, &z, &tokens, &targets, &mask, None)
            .unwrap();
        tape.backward(loss, model.params_mut()).unwrap();

        let ids = model.trainable_ids();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut worst_name = String::new();
        for id in ids {
            let analytic = model.params().get(id).grad().unwrap().to_vec();
            for i in 0..analytic.len() {
                let orig = model.params().get(id).data()[i];

                model.params_mut().get_mut(id).data_mut()[i] = orig + h;
                let mut tp = Tape::new();
                let lp = model
                    .loss_on_tape(&mut tp, &z, &tokens, &targets, &mask, None)
                    .unwrap();
                let fp = tp.scalar(lp);

                model.params_mut().get_mut(id).data_mut()[i] = orig - h;
                let mut tm = Tape::new();
                let lm = model
                    .loss_on_tape(&mut tm, &z, &tokens, &targets, &mask, None)
                    .unwrap();
                let fm = tm.scalar(lm);

                model.params_mut().get_mut(id).data_mut()[i] = orig;

                let numeric = (fp - fm) / (2.0 * h);
                let err = (analytic[i] - numeric).abs()
                    / f64::max(1.0, f64::max(analytic[i].abs(), numeric.abs()));
                if err > worst {
                    worst = err;
                    worst_name = format!("{}[{i}]", model.params().name(id));
                }
            }
        }
        assert!(
            worst <= 1e-4,
            "{:?} adapter: worst relative error {worst} at {worst_name}",
            kind
        );
    }
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let model = tiny_model(AdapterKind::Mha, false, 59);
    let extra = serde_json::json!({"note": "round-trip"});
    let mut bytes = Vec::new();
    checkpoint::save(&model, Some(extra.clone()), &mut bytes).unwrap();

    let (loaded, loaded_extra) = checkpoint::load(&mut bytes.as_slice()).unwrap();
    assert_eq!(loaded_extra, Some(extra));
    assert_eq!(loaded.params().len(), model.params().len());
    for (a, b) in model.params().ids().zip(loaded.params().ids()) {
        assert_eq!(model.params().get(a).data(), loaded.params().get(b).data());
        assert_eq!(
            model.params().get(a).requires_grad(),
            loaded.params().get(b).requires_grad()
        );
    }

    let mut again = Vec::new();
    checkpoint::save(&loaded, loaded_extra, &mut again).unwrap();
    assert_eq!(bytes, again);

    // Loaded model reproduces the original forward pass bit for bit.
    let z = mock_sequence(3, 6, 79);
    let emb = input_rows(&model, &[2, 3]);
    let a = model.decoder_forward(&model.apply_adapter(&z).unwrap(), &emb).unwrap();
    let b = loaded.decoder_forward(&loaded.apply_adapter(&z).unwrap(), &emb).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_rejects_corruption() {
    let model = tiny_model(AdapterKind::Identity, true, 61);
    let mut bytes = Vec::new();
    checkpoint::save(&model, None, &mut bytes).unwrap();

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(checkpoint::load(&mut bad_magic.as_slice()).is_err());

    let truncated = &bytes[..bytes.len() - 9];
    assert!(checkpoint::load(&mut &truncated[..]).is_err());

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(checkpoint::load(&mut trailing.as_slice()).is_err());
}

#[test]
fn dropout_perturbs_training_forward_only() {
    let mut cfg = tiny_decoder_cfg();
    cfg.dropout = 0.5;
    let feature_dim = 6;
    let adapter = adapter_cfg(AdapterKind::Identity, feature_dim, cfg.model_width);
    let table = WordEmbeddingTable::random(5, 4, WordSource::Scratch, true, &mut Rng::new(2))
        .unwrap();
    let model = CaptionModel::new(cfg, adapter, feature_dim, table, &mut Rng::new(3)).unwrap();
    let z = mock_sequence(2, 6, 83);

    let mut t1 = Tape::new();
    let mut rng1 = Rng::new(10);
    let l1 = model
        .loss_on_tape(&mut t1, &z, &[2], &[2, 1], &[true, true], Some(&mut rng1))
        .unwrap();
    let mut t2 = Tape::new();
    let l2 = model.loss_on_tape(&mut t2, &z, &[2], &[2, 1], &[true, true], None).unwrap();
    // Same dropout seed reproduces the same loss; no-rng path is stable.
    let mut t3 = Tape::new();
    let mut rng3 = Rng::new(10);
    let l3 = model
        .loss_on_tape(&mut t3, &z, &[2], &[2, 1], &[true, true], Some(&mut rng3))
        .unwrap();
    assert_eq!(t1.scalar(l1), t3.scalar(l3));
    assert!(t2.scalar(l2).is_finite());
}
