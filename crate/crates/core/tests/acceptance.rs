//! Acceptance suite: one test per criterion, each printing a pass line.
//! Tolerances are pinned in the assertions.

mod common;

use std::time::Instant;

use audiocap_core::data::{
    make_synthetic_corpus, tokenize_caption, CaptionGrammar, DataDir, EncoderSpec,
    FeatureSequence, Pooling, Split, END_INDEX,
};
use audiocap_core::experiment::{
    enumerate_grid, profiles, run_suite, run_training, EarlyStopping, GridFilter,
    SuiteOptions,
};
use audiocap_core::metrics::cider::{cider_d, CorpusDf};
use audiocap_core::metrics::wilcoxon::{wilcoxon_one_sided, PMethod};
use audiocap_core::model::{AdapterKind, EmbeddingSequence, EncoderId, Overlap, WordSource};
use audiocap_core::numerics::fd::check_gradients;
use audiocap_core::{Mask, ParamSet, Rng, Tape, Tensor};

use common::*;

fn rand_tensor(rng: &mut Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::with_grad(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

/// Criterion 1: every differentiable operation and the end-to-end tiny
/// model match central finite differences (step 1e-5) within relative
/// error 1e-4, in under two minutes.
#[test]
fn criterion_01_gradient_suite() {
    let started = Instant::now();
    let mut rng = Rng::new(0xACCE);

    // Per-operation coverage: one composite graph touches add, add_row,
    // mul, mul_scalar, matmul, transpose, relu, softmax, masked softmax,
    // layer norm, masked cross-entropy, embedding lookup, column
    // slice/concat, sum, and mean.
    for trial in 0..5 {
        let rows = 2 + trial % 3;
        let cols = 2 + (trial + 1) % 3;
        let mut ps = ParamSet::new();
        let a = ps.insert("a", rand_tensor(&mut rng, vec![rows, cols], -1.0, 1.0));
        let b = ps.insert("b", rand_tensor(&mut rng, vec![rows, cols], -1.0, 1.0));
        let w = ps.insert("w", rand_tensor(&mut rng, vec![cols, rows], -1.0, 1.0));
        let bias_row = ps.insert("bias_row", rand_tensor(&mut rng, vec![cols], -0.5, 0.5));
        let gain = ps.insert("gain", rand_tensor(&mut rng, vec![cols], 0.5, 1.5));
        let bias = ps.insert("bias", rand_tensor(&mut rng, vec![cols], -0.5, 0.5));
        let table = ps.insert("table", rand_tensor(&mut rng, vec![4, cols], -1.0, 1.0));
        let relu_in = ps.insert("relu_in", {
            let data = (0..rows * cols)
                .map(|_| {
                    let v = rng.uniform(0.1, 1.0);
                    if rng.next_f64() < 0.5 {
                        -v
                    } else {
                        v
                    }
                })
                .collect();
            Tensor::with_grad(vec![rows, cols], data).unwrap()
        });
        let targets: Vec<usize> = (0..rows).map(|i| i % rows).collect();
        let ce_mask: Vec<bool> = (0..rows).map(|i| i != 1).collect();
        let tokens = [1usize, 3, 0];
        let causal = Mask::causal(rows);

        let report = check_gradients(&mut ps, 1e-5, |tape, params| {
            let av = tape.param(params, a);
            let bv = tape.param(params, b);
            let wv = tape.param(params, w);
            let rowv = tape.param(params, bias_row);
            let gv = tape.param(params, gain);
            let biasv = tape.param(params, bias);
            let tablev = tape.param(params, table);
            let reluv = tape.param(params, relu_in);

            let sum = tape.add(av, bv)?;
            let with_row = tape.add_row(sum, rowv)?;
            let prod = tape.mul(with_row, bv)?;
            let scaled = tape.mul_scalar(prod, 0.6);
            let normed = tape.layer_norm(scaled, gv, biasv, 1e-3)?;
            let mm = tape.matmul(normed, wv)?;
            let mt = tape.transpose(mm)?;
            let back = tape.transpose(mt)?;
            let soft = tape.softmax(back, 1)?;
            let ce = tape.cross_entropy_masked(back, &targets, &ce_mask)?;
            let relu = tape.relu(reluv);
            let left = tape.slice_cols(relu, 0, 1)?;
            let right = tape.slice_cols(relu, 1, cols - 1)?;
            let cat = tape.concat_cols(&[left, right])?;
            let emb = tape.embed_tokens(tablev, &tokens)?;
            let bt = tape.transpose(bv)?;
            let square = tape.matmul(av, bt)?;
            let attn = tape.masked_softmax(square, 1, &causal)?;

            let s1 = tape.sum(soft);
            let s2 = tape.sum(cat);
            let s3 = tape.sum(emb);
            let s4 = tape.sum(attn);
            let s5 = tape.mean(mm);
            let t1 = tape.add(s1, s2)?;
            let t2 = tape.add(t1, s3)?;
            let t3 = tape.add(t2, s4)?;
            let t4 = tape.add(t3, s5)?;
            tape.add(t4, ce)
        })
        .unwrap();
        assert!(
            report.max_rel_err <= 1e-4,
            "op suite trial {trial}: rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }

    // End-to-end: the tiny model (width 8, 2 heads, N=1, W=5, T'=3, K=4)
    // under each adapter.
    for kind in AdapterKind::ALL {
        let mut model = tiny_model(kind, true, 0xE2E ^ kind.name().len() as u64);
        let z = mock_sequence(3, TINY_FEATURE_DIM, 0x71A);
        let tokens = [2usize, 3, 4];
        let targets = [2usize, 3, 4, 1];
        let mask = [true; 4];

        model.params_mut().zero_grads();
        let mut tape = Tape::new();
        let loss = model.loss_on_tape(&mut tape, &z, &tokens, &targets, &mask, None).unwrap();
        tape.backward(loss, model.params_mut()).unwrap();

        let eval = |model: &audiocap_core::model::CaptionModel| -> f64 {
            let mut t = Tape::new();
            let l = model.loss_on_tape(&mut t, &z, &tokens, &targets, &mask, None).unwrap();
            t.scalar(l)
        };
        let h = 1e-5;
        let mut worst = 0.0f64;
        for id in model.trainable_ids() {
            let analytic = model.params().get(id).grad().unwrap().to_vec();
            for i in 0..analytic.len() {
                let orig = model.params().get(id).data()[i];
                model.params_mut().get_mut(id).data_mut()[i] = orig + h;
                let fp = eval(&model);
                model.params_mut().get_mut(id).data_mut()[i] = orig - h;
                let fm = eval(&model);
                model.params_mut().get_mut(id).data_mut()[i] = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let err = (analytic[i] - numeric).abs()
                    / f64::max(1.0, f64::max(analytic[i].abs(), numeric.abs()));
                worst = worst.max(err);
            }
        }
        assert!(worst <= 1e-4, "{kind:?} end-to-end rel err {worst}");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "gradient suite took {elapsed:?}");
    println!("acceptance criterion 01 (gradient suite, {elapsed:?}): PASS");
}

/// Criterion 2: the default grid enumerates exactly 264 settings; fixing
/// one encoder leaves 66.
#[test]
fn criterion_02_grid_cardinality() {
    for defaults in [profiles::desk(), profiles::paper()] {
        let grid = enumerate_grid(&defaults);
        assert_eq!(grid.len(), 264);
        for encoder in ["vggish", "yamnet", "openl3", "coala"] {
            let filter = GridFilter::parse(&format!("encoder={encoder}")).unwrap();
            assert_eq!(filter.apply(grid.clone()).len(), 66, "{encoder}");
        }
    }
    println!("acceptance criterion 02 (grid cardinality 264 / 66): PASS");
}

/// Criterion 3: 100 random perturbation trials never change logits before
/// the perturbed position.
#[test]
fn criterion_03_causality() {
    let model = tiny_model(AdapterKind::Identity, true, 0xCA05);
    let mut rng = Rng::new(0xBEEF);
    let word_dim = model.decoder_config().word_dim;
    let w = model.decoder_config().vocab_size;
    for trial in 0..100 {
        let k = 2 + (rng.next_below(5) as usize); // 2..=6 rows
        let z = mock_sequence(3, TINY_FEATURE_DIM, 0x1000 + trial);
        let zprime = model.apply_adapter(&z).unwrap();
        let mut emb_data = vec![0.0; k * word_dim];
        for v in emb_data.iter_mut().skip(word_dim) {
            *v = rng.uniform(-1.0, 1.0);
        }
        let emb = Tensor::new(vec![k, word_dim], emb_data.clone()).unwrap();
        let base = model.decoder_forward(&zprime, &emb).unwrap();

        let pos = 1 + rng.next_below(k as u64 - 1) as usize;
        let mut perturbed_data = emb_data;
        for j in 0..word_dim {
            perturbed_data[pos * word_dim + j] += rng.uniform(-3.0, 3.0);
        }
        let perturbed_emb = Tensor::new(vec![k, word_dim], perturbed_data).unwrap();
        let perturbed = model.decoder_forward(&zprime, &perturbed_emb).unwrap();

        assert_eq!(
            &base.data()[..pos * w],
            &perturbed.data()[..pos * w],
            "trial {trial}: perturbation at {pos} leaked backwards"
        );
    }
    println!("acceptance criterion 03 (causality, 100 trials): PASS");
}

/// Criterion 4: on the 20-clip synthetic corpus at the desk profile, train
/// loss falls below 0.01 within 500 epochs and greedy decoding reproduces
/// at least 95% of training captions exactly, within ten minutes.
#[test]
fn criterion_04_overfit() {
    let started = Instant::now();
    let grammar = CaptionGrammar::default();
    let corpus = make_synthetic_corpus(42, 20, &grammar).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to_dir(dir.path()).unwrap();
    let data = DataDir::new(dir.path());

    let defaults = desk_defaults();
    let mut cfg = mock_config(
        &defaults,
        AdapterKind::Mlp,
        Overlap::None,
        WordSource::Scratch,
        true,
        grammar.embedding_dim,
    );
    cfg.seed = 1;
    cfg.patience = 500;
    cfg.max_epochs = 500;
    cfg.stop_when_train_loss_below = Some(0.01);

    let out = run_training(&cfg, &data).unwrap();
    let min_train = out.log.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
    assert!(
        min_train < 0.01,
        "train loss only reached {min_train} after {} epochs",
        out.stopped_epoch
    );
    assert!(out.stopped_epoch <= 500);

    let train = data.load_split(Split::Train).unwrap();
    let store = data.store();
    let mut exact = 0usize;
    let mut total = 0usize;
    for (clip_id, caption) in train.examples() {
        let z = store.load(cfg.encoder_id, cfg.overlap, clip_id).unwrap();
        let zprime = out.final_model.apply_adapter(&z).unwrap();
        let decoded = out.final_model.greedy_decode(&zprime, END_INDEX).unwrap();
        let words: Vec<String> =
            out.vocab.decode_until_end(&decoded).into_iter().map(str::to_string).collect();
        total += 1;
        if words == tokenize_caption(caption).unwrap() {
            exact += 1;
        }
    }
    let rate = exact as f64 / total as f64;
    assert!(rate >= 0.95, "reproduced only {exact}/{total} training captions");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "overfit check took {elapsed:?}");
    println!(
        "acceptance criterion 04 (overfit: loss {min_train:.4}, {exact}/{total} captions, {elapsed:?}): PASS"
    );
}

/// Criterion 5: CIDEr-D identity scores 10 +- 1e-6, disjoint vocabulary
/// scores 0, and 1000 fuzz cases confirm reference-order invariance.
#[test]
fn criterion_05_metric_oracle() {
    let toks = |s: &str| -> Vec<String> { s.split_whitespace().map(str::to_string).collect() };
    let sets = vec![
        vec![toks("a dog barks loudly outside the house")],
        vec![toks("a cat sleeps on the warm mat")],
        vec![toks("rain falls on the tin roof")],
    ];
    let df = CorpusDf::build(&sets);
    for refs in &sets {
        let score = cider_d(&refs[0], refs, &df).unwrap();
        assert!((score - 10.0).abs() <= 1e-6, "identity scored {score}");
    }
    let disjoint = toks("quantum flux harmonics resonate deeply");
    assert_eq!(cider_d(&disjoint, &sets[0], &df).unwrap(), 0.0);

    let mut rng = Rng::new(0x51D3);
    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let caption = |rng: &mut Rng| -> Vec<String> {
        let len = 1 + rng.next_below(7) as usize;
        (0..len).map(|_| words[rng.next_below(10) as usize].clone()).collect()
    };
    for trial in 0..1000 {
        let reference_sets: Vec<Vec<Vec<String>>> = (0..3)
            .map(|_| (0..5).map(|_| caption(&mut rng)).collect())
            .collect();
        let df = CorpusDf::build(&reference_sets);
        let candidate = caption(&mut rng);
        let base = cider_d(&candidate, &reference_sets[0], &df).unwrap();
        assert!((0.0..=10.0).contains(&base));
        let mut shuffled = reference_sets[0].clone();
        rng.shuffle(&mut shuffled);
        let shuffled_score = cider_d(&candidate, &shuffled, &df).unwrap();
        assert_eq!(
            shuffled_score.to_bits(),
            base.to_bits(),
            "trial {trial}: reference order changed the score"
        );
    }
    println!("acceptance criterion 05 (CIDEr-D oracle + 1000 fuzz cases): PASS");
}

/// Criterion 6: exact Wilcoxon p equals brute-force enumeration over all
/// 2^n sign assignments for 1000 random cases with n <= 10.
#[test]
fn criterion_06_wilcoxon_oracle() {
    // Independent oracle: direct enumeration with mid-ranks.
    fn brute_force(diffs: &[f64]) -> (f64, f64) {
        let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
        let n = nonzero.len();
        let mags: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
        let mut ranks = vec![0.0f64; n];
        for i in 0..n {
            let below = mags.iter().filter(|&&m| m < mags[i]).count();
            let equal = mags.iter().filter(|&&m| m == mags[i]).count();
            ranks[i] = below as f64 + (equal as f64 + 1.0) / 2.0;
        }
        let observed: f64 =
            nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let mut favorable = 0u64;
        for pattern in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|&i| pattern >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w >= observed - 1e-12 {
                favorable += 1;
            }
        }
        (observed, favorable as f64 / (1u64 << n) as f64)
    }

    let hand = wilcoxon_one_sided(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(hand.w_statistic, 6.0);
    assert_eq!(hand.p_one_sided, 0.125);

    let mut rng = Rng::new(0x111C0);
    let mut checked = 0;
    while checked < 1000 {
        let n = 1 + rng.next_below(10) as usize;
        let diffs: Vec<f64> = (0..n).map(|_| rng.next_below(9) as f64 - 4.0).collect();
        if diffs.iter().all(|&d| d == 0.0) {
            continue;
        }
        let result = wilcoxon_one_sided(&diffs).unwrap();
        let (w_expected, p_expected) = brute_force(&diffs);
        assert_eq!(result.method, PMethod::Exact);
        assert!(
            (result.w_statistic - w_expected).abs() < 1e-12
                && (result.p_one_sided - p_expected).abs() < 1e-12,
            "case {checked} {diffs:?}: ({}, {}) vs ({w_expected}, {p_expected})",
            result.w_statistic,
            result.p_one_sided
        );
        checked += 1;
    }
    println!("acceptance criterion 06 (Wilcoxon exact vs 2^n enumeration, 1000 cases): PASS");
}

/// Criterion 7: the window count from the mock encoder equals exhaustive
/// enumeration of window start offsets for every T <= 64 and both
/// overlaps; T=100, w=10, half overlap gives 19 windows.
#[test]
fn criterion_07_framing_arithmetic() {
    let feature_dim = 2;
    for t in 1..=64usize {
        let features =
            FeatureSequence::new(vec![0.5; t * feature_dim], t, feature_dim, 1.0).unwrap();
        for w in 1..=t {
            let spec = EncoderSpec::mock(3, w as f32);
            for overlap in Overlap::ALL {
                let hop = match overlap {
                    Overlap::None => w,
                    Overlap::Half => (w / 2).max(1),
                };
                let mut expected = 0;
                let mut start = 0;
                while start + w <= t {
                    expected += 1;
                    start += hop;
                }
                let seq = window_embed_checked(&features, &spec, overlap);
                assert_eq!(
                    seq.t_prime(),
                    expected,
                    "T={t} w={w} {overlap:?}: got {} windows",
                    seq.t_prime()
                );
            }
        }
    }

    let features = FeatureSequence::new(vec![0.1; 100 * 2], 100, 2, 1.0).unwrap();
    let spec = EncoderSpec::mock(3, 10.0);
    let seq = window_embed_checked(&features, &spec, Overlap::Half);
    assert_eq!(seq.t_prime(), 19);
    println!("acceptance criterion 07 (framing arithmetic, exhaustive T<=64): PASS");
}

fn window_embed_checked(
    features: &FeatureSequence,
    spec: &EncoderSpec,
    overlap: Overlap,
) -> EmbeddingSequence {
    audiocap_core::data::window_embed(features, spec, overlap, Pooling::Mean).unwrap()
}

/// Criterion 8: scripted validation-loss sequences produce the exact stop
/// and best-checkpoint epochs dictated by patience = 10.
#[test]
fn criterion_08_early_stopping() {
    let run_script = |losses: &[f64], patience: usize| -> (Option<usize>, usize) {
        let mut stopping = EarlyStopping::new(patience);
        for (i, &loss) in losses.iter().enumerate() {
            if stopping.observe(i + 1, loss).stop {
                return (Some(i + 1), stopping.best_epoch());
            }
        }
        (None, stopping.best_epoch())
    };

    // Strict improvement for three epochs, flat ever after.
    let mut script = vec![0.9, 0.8, 0.7];
    script.extend(std::iter::repeat(0.7).take(40));
    assert_eq!(run_script(&script, 10), (Some(13), 3));

    // Monotone worsening after the first epoch.
    let script: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 0.01).collect();
    assert_eq!(run_script(&script, 10), (Some(11), 1));

    // Improvement at epoch 12 resets the counter.
    let mut script = vec![1.0];
    script.extend(std::iter::repeat(1.5).take(10)); // epochs 2..=11, 10 flat
    script[10] = 0.5; // epoch 11 improves just before stopping
    script.extend(std::iter::repeat(1.5).take(15));
    assert_eq!(run_script(&script, 10), (Some(21), 11));

    // Strictly improving sequences never stop.
    let script: Vec<f64> = (0..60).map(|i| 1.0 / (i + 1) as f64).collect();
    assert_eq!(run_script(&script, 10), (None, 60));

    println!("acceptance criterion 08 (early stopping semantics): PASS");
}

/// Criterion 9: the suite emits byte-identical summary CSVs for 1 and 4
/// workers, and repeated single runs produce identical loss logs.
#[test]
fn criterion_09_determinism() {
    let grammar = CaptionGrammar::default();
    let corpus = make_synthetic_corpus(7, 10, &grammar).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to_dir(dir.path()).unwrap();
    let data = DataDir::new(dir.path());

    let defaults = desk_defaults();
    let mut grid = Vec::new();
    for (kind, word, ft) in [
        (AdapterKind::Identity, WordSource::Random, false),
        (AdapterKind::Mlp, WordSource::Scratch, true),
    ] {
        let mut cfg =
            mock_config(&defaults, kind, Overlap::None, word, ft, grammar.embedding_dim);
        cfg.max_epochs = 3;
        grid.push(cfg);
    }

    let summary_bytes = |jobs: usize| -> Vec<u8> {
        let result = run_suite(
            &grid,
            &data,
            &SuiteOptions { seeds: vec![1, 2], jobs, contrasts: vec![] },
        )
        .unwrap();
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        let out = tempfile::tempdir().unwrap();
        let path = out.path().join("summary.csv");
        audiocap_core::experiment::report::write_summary_csv(&path, &result.summaries).unwrap();
        std::fs::read(&path).unwrap()
    };
    let serial = summary_bytes(1);
    let parallel = summary_bytes(4);
    assert_eq!(serial, parallel, "summary CSV differs between 1 and 4 workers");

    let mut cfg = grid[0].clone();
    cfg.seed = 5;
    let run_a = run_training(&cfg, &data).unwrap();
    let run_b = run_training(&cfg, &data).unwrap();
    assert_eq!(run_a.log.len(), run_b.log.len());
    for (a, b) in run_a.log.iter().zip(&run_b.log) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
    }
    println!("acceptance criterion 09 (determinism across workers and reruns): PASS");
}

/// Criterion 10: frozen tables survive training byte-identically,
/// fine-tuned tables move after one step, and BERT-static configurations
/// reject fine-tuning.
#[test]
fn criterion_10_frozen_vs_fine_tuned() {
    let grammar = CaptionGrammar::default();
    let corpus = make_synthetic_corpus(11, 10, &grammar).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to_dir(dir.path()).unwrap();
    let data = DataDir::new(dir.path());
    let defaults = desk_defaults();

    // Frozen file-backed table: byte-identical to its loaded state after a
    // full training run.
    let mut cfg = mock_config(
        &defaults,
        AdapterKind::Identity,
        Overlap::None,
        WordSource::W2v,
        false,
        grammar.embedding_dim,
    );
    cfg.seed = 3;
    cfg.max_epochs = 4;
    let out = run_training(&cfg, &data).unwrap();
    let loaded = audiocap_core::data::load_word_embedding_table(
        data.word_vectors_path(WordSource::W2v),
        &out.vocab,
        WordSource::W2v,
        false,
        cfg.seed,
    )
    .unwrap();
    let as_bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(
        as_bits(out.final_model.table_rows().data()),
        as_bits(loaded.rows().data()),
        "frozen table changed during training"
    );

    // Fine-tuned: at least one row moves after a single epoch.
    let mut cfg_ft = cfg.clone();
    cfg_ft.fine_tune = true;
    cfg_ft.max_epochs = 1;
    let out_ft = run_training(&cfg_ft, &data).unwrap();
    assert_ne!(
        as_bits(out_ft.final_model.table_rows().data()),
        as_bits(loaded.rows().data()),
        "fine-tuned table never moved"
    );

    // BERT is never fine-tuned.
    let mut bert = mock_config(
        &defaults,
        AdapterKind::Identity,
        Overlap::None,
        WordSource::BertStatic,
        true,
        grammar.embedding_dim,
    );
    assert!(bert.validate().is_err());
    bert.fine_tune = false;
    assert!(bert.validate().is_ok());
    println!("acceptance criterion 10 (frozen vs fine-tuned contract): PASS");
}

/// Criterion 11: the identity adapter is a bit-exact pass-through, the MLP
/// adapter commutes with time permutations, and the MHA adapter does not.
#[test]
fn criterion_11_adapter_behavior() {
    let identity = tiny_model(AdapterKind::Identity, true, 0xAD1);
    let mlp = tiny_model(AdapterKind::Mlp, true, 0xAD2);
    let mha = tiny_model(AdapterKind::Mha, true, 0xAD3);
    let mut rng = Rng::new(0xAD4);

    let reverse_rows = |z: &EmbeddingSequence| -> EmbeddingSequence {
        let (t, f) = (z.t_prime(), z.f_prime());
        let mut rev = Vec::with_capacity(t * f);
        for r in (0..t).rev() {
            rev.extend_from_slice(&z.values()[r * f..(r + 1) * f]);
        }
        EmbeddingSequence::new(rev, t, f, EncoderId::Mock, Overlap::None, 1.0, 1.0).unwrap()
    };

    let mut mha_counterexample = false;
    for trial in 0..20 {
        let t = 3 + (trial % 3);
        let z = mock_sequence(t, TINY_FEATURE_DIM, 0x2000 + trial as u64 + rng.next_below(7));

        let out = identity.apply_adapter(&z).unwrap();
        assert_eq!(out.values, z.to_tensor(), "identity adapter modified its input");

        let mlp_fwd = mlp.apply_adapter(&z).unwrap();
        let mlp_rev = mlp.apply_adapter(&reverse_rows(&z)).unwrap();
        let d = mlp_fwd.dim();
        for r in 0..t {
            assert_eq!(
                &mlp_fwd.values.data()[r * d..(r + 1) * d],
                &mlp_rev.values.data()[(t - 1 - r) * d..(t - r) * d],
                "mlp adapter is not permutation-equivariant"
            );
        }

        let mha_fwd = mha.apply_adapter(&z).unwrap();
        let mha_rev = mha.apply_adapter(&reverse_rows(&z)).unwrap();
        let d = mha_fwd.dim();
        let permuted_equal = (0..t).all(|r| {
            mha_fwd.values.data()[r * d..(r + 1) * d]
                .iter()
                .zip(&mha_rev.values.data()[(t - 1 - r) * d..(t - r) * d])
                .all(|(a, b)| (a - b).abs() < 1e-9)
        });
        if !permuted_equal {
            mha_counterexample = true;
        }
    }
    assert!(mha_counterexample, "no MHA equivariance counterexample found in 20 trials");
    println!("acceptance criterion 11 (adapter behavior): PASS");
}
