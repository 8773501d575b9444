use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{pad_batch, AugmentConfig, AugmentedInput, ConstraintMatch, Example, Region, TokenId, BOS, PAD};
use crate::tensor::Matrix;
use crate::Error;

fn tiny(vocab: usize) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ffn: 16,
        vocab_size: vocab,
        max_aug_len: 48,
        max_tgt_len: 16,
        max_segments: 4,
        p_offset: 16,
        dropout: 0.0,
        gate_hidden: 16,
        seed: 3,
    }
}

/// Overwrites every weight with a fixed, non-symmetric pattern.
fn hand_set(params: &mut Parameters<f64>) {
    for (k, t) in params.tensors_mut().iter_mut().enumerate() {
        let cols = t.cols();
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            let (r, c) = (i / cols, i % cols);
            *x = 0.8 * ((k * 13 + r * 7 + c * 3 + 1) as f64 * 0.61).sin();
        }
    }
}

fn cm(span: core::ops::Range<usize>, cands: &[&[TokenId]]) -> ConstraintMatch {
    ConstraintMatch { span, candidates: cands.iter().map(|c| c.to_vec()).collect() }
}

// ---- independent oracle on nested vectors -------------------------------

type M = Vec<Vec<f64>>;

fn rows(m: &Matrix<f64>) -> M {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn mm(x: &M, w: &Matrix<f64>) -> M {
    x.iter()
        .map(|row| (0..w.cols()).map(|j| row.iter().enumerate().map(|(k, v)| v * w.get(k, j)).sum()).collect())
        .collect()
}

fn lin(x: &M, w: &Matrix<f64>, b: &Matrix<f64>) -> M {
    mm(x, w).into_iter().map(|r| r.iter().enumerate().map(|(j, v)| v + b.get(0, j)).collect()).collect()
}

fn add(a: &M, b: &M) -> M {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn ln(x: &M, g: &Matrix<f64>, b: &Matrix<f64>) -> M {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            r.iter().enumerate().map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * g.get(0, j) + b.get(0, j)).collect()
        })
        .collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Returns output rows and head-averaged probabilities.
fn mha(p: &Parameters<f64>, ids: AttentionIds, xq: &M, xkv: &M, heads: usize, causal: bool, mask: &[bool]) -> (M, M) {
    let t = |i| p.tensor(i);
    let q = lin(xq, t(ids.wq), t(ids.bq));
    let k = lin(xkv, t(ids.wk), t(ids.bk));
    let v = lin(xkv, t(ids.wv), t(ids.bv));
    let d = q[0].len();
    let dh = d / heads;
    let mut ctx = vec![vec![0.0; d]; xq.len()];
    let mut avg = vec![vec![0.0; xkv.len()]; xq.len()];
    for h in 0..heads {
        for i in 0..xq.len() {
            let allowed: Vec<usize> = (0..xkv.len()).filter(|&j| mask[j] && (!causal || j <= i)).collect();
            let scores: Vec<f64> = allowed
                .iter()
                .map(|&j| (0..dh).map(|c| q[i][h * dh + c] * k[j][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let probs = softmax(&scores);
            for (&j, &pj) in allowed.iter().zip(&probs) {
                avg[i][j] += pj / heads as f64;
                for c in 0..dh {
                    ctx[i][h * dh + c] += pj * v[j][h * dh + c];
                }
            }
        }
    }
    (lin(&ctx, t(ids.wo), t(ids.bo)), avg)
}

fn ffn(p: &Parameters<f64>, ids: FfnIds, x: &M) -> M {
    let h: M = lin(x, p.tensor(ids.w1), p.tensor(ids.b1))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    lin(&h, p.tensor(ids.w2), p.tensor(ids.b2))
}

fn oracle_encode(p: &Parameters<f64>, aug: &AugmentedInput) -> M {
    let l = p.layout();
    let mut x: M = (0..aug.len())
        .map(|i| {
            let a = p.tensor(l.tok_emb).row(aug.token_ids[i] as usize);
            let b = p.tensor(l.pos_emb).row(aug.position_ids[i]);
            let c = p.tensor(l.seg_emb).row(aug.segment_ids[i]);
            (0..a.len()).map(|j| a[j] + b[j] + c[j]).collect()
        })
        .collect();
    let mask: Vec<bool> = aug.region.iter().map(|r| *r != Region::Pad).collect();
    for ids in &l.encoder {
        let (a, _) = mha(p, ids.self_attn, &x, &x, p.config().n_heads, false, &mask);
        x = ln(&add(&x, &a), p.tensor(ids.norm1.gamma), p.tensor(ids.norm1.beta));
        let f = ffn(p, ids.ffn, &x);
        x = ln(&add(&x, &f), p.tensor(ids.norm2.gamma), p.tensor(ids.norm2.beta));
    }
    x
}

/// Returns (p_final, gate, alpha) at the last prefix position.
fn oracle_step(p: &Parameters<f64>, aug: &AugmentedInput, h: &M, prefix: &[TokenId]) -> (Vec<f64>, f64, Vec<f64>) {
    let l = p.layout();
    let cfg = p.config();
    let v = cfg.vocab_size;
    let mut y: M = prefix
        .iter()
        .enumerate()
        .map(|(i, &tok)| {
            let a = p.tensor(l.tok_emb).row(tok as usize);
            let b = p.tensor(l.pos_emb).row(i);
            (0..a.len()).map(|j| a[j] + b[j]).collect()
        })
        .collect();
    let mask: Vec<bool> = aug.region.iter().map(|r| *r != Region::Pad).collect();
    let all = vec![true; prefix.len()];
    let mut alpha = vec![];
    for ids in &l.decoder {
        let (a, _) = mha(p, ids.self_attn, &y, &y, cfg.n_heads, true, &all);
        y = ln(&add(&y, &a), p.tensor(ids.norm1.gamma), p.tensor(ids.norm1.beta));
        let (c, avg) = mha(p, ids.cross_attn, &y, h, cfg.n_heads, false, &mask);
        alpha = avg.last().unwrap().clone();
        y = ln(&add(&y, &c), p.tensor(ids.norm2.gamma), p.tensor(ids.norm2.beta));
        let f = ffn(p, ids.ffn, &y);
        y = ln(&add(&y, &f), p.tensor(ids.norm3.gamma), p.tensor(ids.norm3.beta));
    }
    let s = y.last().unwrap().clone();
    let d = s.len();
    let c: Vec<f64> = (0..d).map(|j| alpha.iter().zip(h).map(|(a, r)| a * r[j]).sum()).collect();
    let p_pred = softmax(&mm(&vec![s.clone()], p.tensor(l.out_proj))[0]);

    let cs: Vec<f64> = c.iter().chain(&s).copied().collect();
    let z: Vec<f64> = lin(&vec![cs], p.tensor(l.gate.w1), p.tensor(l.gate.b1))[0].iter().map(|x| x.max(0.0)).collect();
    let logit = lin(&vec![z], p.tensor(l.gate.w2), p.tensor(l.gate.b2))[0][0];
    let g = 1.0 / (1.0 + (-logit).exp());
    if aug.blocks.is_empty() {
        return (p_pred, g, alpha);
    }

    let mut copy = vec![0.0; v];
    for (pos, a) in alpha.iter().enumerate() {
        if aug.region[pos] == Region::Constraint {
            copy[aug.token_ids[pos] as usize] += a;
        }
    }
    let mass: f64 = copy.iter().sum();
    copy.iter_mut().for_each(|x| *x /= mass);

    let mut dis = vec![0.0; v];
    let n = aug.blocks.len() as f64;
    for block in &aug.blocks {
        let embs: Vec<Vec<f64>> = block
            .candidates
            .iter()
            .map(|r| (0..d).map(|j| r.clone().map(|pos| h[pos][j]).sum::<f64>() / r.len() as f64).collect())
            .collect();
        let scores: Vec<f64> = embs.iter().map(|e| e.iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
        for (r, pr) in block.candidates.iter().zip(softmax(&scores)) {
            for pos in r.clone() {
                dis[aug.token_ids[pos] as usize] += pr / n / r.len() as f64;
            }
        }
    }
    let fin = (0..v).map(|i| g * p_pred[i] + (1.0 - g) * 0.5 * (copy[i] + dis[i])).collect();
    (fin, g, alpha)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- embed --------------------------------------------------------------

#[test]
fn embed_zero_tables_give_zero() {
    let p = Parameters::<f64>::zeros(tiny(20)).unwrap();
    let aug = AugmentedInput::build(&[7, 8, 9], &[cm(1..2, &[&[10], &[11]])], &p.config().augment_config()).unwrap();
    let e = embed(&aug, &p).unwrap();
    assert_eq!(e.shape(), (aug.len(), 8));
    assert!(e.data().iter().all(|&x| x == 0.0));
}

#[test]
fn embed_hand_tables() {
    let cfg = ModelConfig { d_model: 2, n_heads: 1, p_offset: 2, max_aug_len: 4, max_tgt_len: 2, ..tiny(6) };
    let mut p = Parameters::<f64>::zeros(cfg).unwrap();
    let l = p.layout().clone();
    *p.tensor_mut(l.tok_emb) = Matrix::from_fn(6, 2, |r, c| (r * 10 + c) as f64);
    *p.tensor_mut(l.pos_emb) = Matrix::from_fn(6, 2, |r, c| (r * 100 + c * 2) as f64);
    *p.tensor_mut(l.seg_emb) = Matrix::from_fn(4, 2, |r, c| (r * 1000 + c * 3) as f64);
    let aug = AugmentedInput::build(&[4, 1], &[], &cfg.augment_config()).unwrap();
    // [4, 1, <eos>=3] at positions 0, 1, 2 (p_offset), segment 0
    let e = embed(&aug, &p).unwrap();
    assert_eq!(e.row(0), &[40.0, 41.0 + 2.0 + 3.0]);
    assert_eq!(e.row(1), &[10.0 + 100.0, 11.0 + 102.0 + 3.0]);
    assert_eq!(e.row(2), &[30.0 + 200.0, 31.0 + 202.0 + 3.0]);

    let mut bad = aug.clone();
    bad.token_ids[0] = 6;
    assert!(matches!(embed(&bad, &p), Err(Error::IdOutOfRange { id: 6, size: 6, .. })));
    bad = aug.clone();
    bad.segment_ids[1] = 9;
    assert!(matches!(encode(&bad, &p), Err(Error::IdOutOfRange { id: 9, size: 4, .. })));
}

// ---- encoder / decoder against the oracle ------------------------------

#[test]
fn encode_matches_oracle_d2() {
    let cfg = ModelConfig { d_model: 2, n_heads: 1, d_ffn: 3, gate_hidden: 4, ..tiny(6) };
    let mut p = Parameters::<f64>::init(cfg).unwrap();
    hand_set(&mut p);
    let aug = AugmentedInput::build(&[4, 5], &[], &cfg.augment_config()).unwrap();
    let enc = encode(&aug, &p).unwrap();
    assert_eq!(enc.h.shape(), (3, 2));
    let want = oracle_encode(&p, &aug);
    for (r, w) in want.iter().enumerate() {
        assert!(max_diff(enc.h.row(r), w) < 1e-12);
    }
}

#[test]
fn decode_step_matches_oracle_d2_v6() {
    let cfg = ModelConfig { d_model: 2, n_heads: 1, d_ffn: 3, gate_hidden: 4, ..tiny(6) };
    let mut p = Parameters::<f64>::init(cfg).unwrap();
    hand_set(&mut p);
    let aug = AugmentedInput::build(&[1, 4], &[cm(0..1, &[&[3], &[5, 4]])], &cfg.augment_config()).unwrap();
    let enc = encode(&aug, &p).unwrap();
    let h = rows(&enc.h);
    for prefix in [&[BOS][..], &[BOS, 5], &[BOS, 5, 3, 4]] {
        let out = decode_step(prefix, &enc, &p).unwrap();
        let (want, g, alpha) = oracle_step(&p, &aug, &h, prefix);
        assert!(max_diff(&out.p_final, &want) < 1e-12);
        assert!((out.gate - g).abs() < 1e-12);
        assert!(max_diff(&out.alpha, &alpha) < 1e-12);
    }
}

#[test]
fn multi_layer_multi_head_matches_oracle() {
    let cfg = ModelConfig { n_layers: 2, ..tiny(20) };
    let p = Parameters::<f64>::init(cfg).unwrap();
    let matches = [cm(0..1, &[&[12, 13], &[14]]), cm(2..4, &[&[15]])];
    let aug = AugmentedInput::build(&[7, 8, 9, 10], &matches, &cfg.augment_config()).unwrap();
    let enc = encode(&aug.padded(aug.len() + 3), &p).unwrap();
    let h = rows(&enc.h);
    let out = decode_step(&[BOS, 12, 13], &enc, &p).unwrap();
    let (want, g, _) = oracle_step(&p, &enc.aug, &h, &[BOS, 12, 13]);
    assert!(max_diff(&out.p_final, &want) < 1e-12);
    assert!((out.gate - g).abs() < 1e-12);
    let valid = oracle_encode(&p, &aug);
    for (r, w) in valid.iter().enumerate() {
        assert!(max_diff(enc.h.row(r), w) < 1e-12);
    }
}

#[test]
fn encode_is_deterministic() {
    let p = Parameters::<f32>::init(tiny(20)).unwrap();
    let aug = AugmentedInput::build(&[7, 8, 9], &[cm(0..1, &[&[11], &[12]])], &p.config().augment_config()).unwrap();
    let a = encode(&aug, &p).unwrap();
    let b = encode(&aug, &p).unwrap();
    assert_eq!(a.h.data(), b.h.data());
    let sa = decode_step(&[BOS, 11], &a, &p).unwrap();
    let sb = decode_step(&[BOS, 11], &b, &p).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn prefix_must_start_with_bos() {
    let p = Parameters::<f32>::init(tiny(20)).unwrap();
    let aug = AugmentedInput::build(&[7], &[], &p.config().augment_config()).unwrap();
    let enc = encode(&aug, &p).unwrap();
    assert!(decode_step(&[7], &enc, &p).is_err());
    assert!(decode_step(&[], &enc, &p).is_err());
    let long = vec![BOS; 17];
    assert!(decode_step(&long, &enc, &p).is_err());
}

// ---- bypass, padding, teacher forcing ----------------------------------

#[test]
fn bypass_without_constraints() {
    let p = Parameters::<f32>::init(tiny(20)).unwrap();
    let aug = AugmentedInput::build(&[7, 8, 9], &[], &p.config().augment_config()).unwrap();
    let enc = encode(&aug, &p).unwrap();
    let out = decode_step(&[BOS, 10, 11], &enc, &p).unwrap();
    assert!(out.p_copy.is_none() && out.p_dis.is_none());
    assert!(out.dis_per_candidate.is_empty());
    assert_eq!(out.p_final, out.p_pred);

    // the batched graph bypasses per example, even next to constrained ones
    let cfg = p.config().augment_config();
    let with = AugmentedInput::build(&[7, 8], &[cm(0..1, &[&[12], &[13]])], &cfg).unwrap();
    let batch = pad_batch(&[aug, with], &[vec![10, 11], vec![12]], PAD).unwrap();
    let fwd = forward_batch(&p, &batch, false, None).unwrap();
    let (fin, pred) = (fwd.graph.value(fwd.p_final), fwd.graph.value(fwd.p_pred));
    for r in 0..batch.tgt_len {
        assert_eq!(fin.row(r), pred.row(r));
    }
    assert_ne!(fin.row(batch.tgt_len), pred.row(batch.tgt_len));
}

#[test]
fn padding_does_not_change_outputs() {
    let p = Parameters::<f32>::init(ModelConfig { n_layers: 2, ..tiny(20) }).unwrap();
    let cfg = p.config().augment_config();
    let a = AugmentedInput::build(&[7, 8], &[cm(1..2, &[&[12], &[13, 14]])], &cfg).unwrap();
    let b = AugmentedInput::build(&[9, 10, 11, 7, 8], &[cm(0..2, &[&[15], &[16], &[17]])], &cfg).unwrap();
    let single = pad_batch(&[a.clone()], &[vec![12, 5]], PAD).unwrap();
    let both = pad_batch(&[a, b], &[vec![12, 5], vec![15, 16, 17, 18]], PAD).unwrap();
    let f1 = forward_batch(&p, &single, false, None).unwrap();
    let f2 = forward_batch(&p, &both, false, None).unwrap();
    let (x, y) = (f1.graph.value(f1.p_final), f2.graph.value(f2.p_final));
    for t in 0..single.tgt_len {
        let diff = x.row(t).iter().zip(y.row(t)).map(|(u, v)| (u - v).abs()).fold(0.0, f32::max);
        assert!(diff <= 1e-6, "step {t}: {diff}");
    }
}

#[test]
fn teacher_forcing_matches_step_decoding() {
    let p = Parameters::<f64>::init(ModelConfig { n_layers: 2, ..tiny(20) }).unwrap();
    let example = Example {
        source: vec![7, 8, 9],
        target: vec![12, 13, 10, 11],
        constraints: vec![cm(0..1, &[&[12, 13], &[14]]), cm(2..3, &[&[11]])],
    };
    let dists = forward_teacher_forced(&example, &p).unwrap();
    assert_eq!(dists.len(), example.target.len() + 1);
    let enc = encode(&augment_example(&example, &p).unwrap(), &p).unwrap();
    let mut prefix = vec![BOS];
    for (t, want) in dists.iter().enumerate() {
        let out = decode_step(&prefix, &enc, &p).unwrap();
        assert!(max_diff(&out.p_final, want) < 1e-12, "step {t}");
        if let Some(&y) = example.target.get(t) {
            prefix.push(y);
        }
    }
}

#[test]
fn batched_steps_match_single_steps() {
    let p = Parameters::<f64>::init(tiny(20)).unwrap();
    let aug = AugmentedInput::build(&[7, 8], &[cm(0..1, &[&[12], &[13]])], &p.config().augment_config()).unwrap();
    let enc = encode(&aug, &p).unwrap();
    let prefixes: [&[TokenId]; 3] = [&[BOS, 12], &[BOS, 13], &[BOS, 9]];
    let many = decode_steps(&prefixes, &enc, &p).unwrap();
    for (pre, out) in prefixes.iter().zip(&many) {
        assert_eq!(&decode_step(pre, &enc, &p).unwrap(), out);
    }
}

// ---- random-draw invariants --------------------------------------------

fn random_case(rng: &mut ChaCha8Rng) -> (Parameters<f64>, AugmentedInput, Vec<TokenId>) {
    let heads = [1, 2, 4][rng.gen_range(0..3)];
    let cfg = ModelConfig {
        d_model: heads * rng.gen_range(1..4),
        n_heads: heads,
        n_layers: rng.gen_range(1..3),
        d_ffn: rng.gen_range(1..9),
        vocab_size: rng.gen_range(8..24),
        gate_hidden: rng.gen_range(1..6),
        seed: rng.gen(),
        ..tiny(8)
    };
    let mut p = Parameters::<f64>::init(cfg).unwrap();
    let scale = rng.gen_range(0.5..2.0);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x *= scale);
    }
    let v = cfg.vocab_size as TokenId;
    let s_len = rng.gen_range(1..7);
    let source: Vec<TokenId> = (0..s_len).map(|_| rng.gen_range(6..v)).collect();
    let mut matches = Vec::new();
    let mut at = 0;
    while at < s_len && rng.gen_bool(0.6) {
        let len = rng.gen_range(1..=(s_len - at).min(2));
        let k = rng.gen_range(1..4);
        let cands = (0..k).map(|_| (0..rng.gen_range(1..4)).map(|_| rng.gen_range(6..v)).collect()).collect();
        matches.push(ConstraintMatch { span: at..at + len, candidates: cands });
        at += len + rng.gen_range(0..2);
    }
    let aug = AugmentedInput::build(&source, &matches, &cfg.augment_config()).unwrap();
    let aug = aug.padded(aug.len() + rng.gen_range(0..3));
    let prefix = core::iter::once(BOS).chain((0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..v))).collect();
    (p, aug, prefix)
}

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-6
}

#[test]
fn distributions_stay_on_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let (p, aug, prefix) = random_case(&mut rng);
        let enc = encode(&aug, &p).unwrap();
        let out = decode_step(&prefix, &enc, &p).unwrap();
        assert!(on_simplex(&out.p_pred), "trial {trial}");
        assert!(on_simplex(&out.p_final), "trial {trial}");
        assert!(out.gate > 0.0 && out.gate < 1.0);
        let valid: f64 = out.alpha.iter().zip(&enc.attn_mask).filter(|(_, m)| **m).map(|(a, _)| a).sum();
        assert!((valid - 1.0).abs() < 1e-9);
        if let Some(copy) = &out.p_copy {
            assert!(on_simplex(copy));
            for (id, &mass) in copy.iter().enumerate() {
                let present = aug
                    .region
                    .iter()
                    .zip(&aug.token_ids)
                    .any(|(r, &t)| *r == Region::Constraint && t as usize == id);
                assert!(present || mass == 0.0, "copy mass on absent id {id}");
            }
        }
        assert_eq!(out.p_dis.is_some(), !aug.blocks.is_empty());
        if let Some(dis) = &out.p_dis {
            assert!(on_simplex(dis));
        }
        for probs in &out.dis_per_candidate {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        if aug.blocks.is_empty() {
            assert_eq!(out.p_final, out.p_pred);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_and_step_paths_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, aug, prefix) = random_case(&mut rng);
        let parsed = AugmentedInput::parse(&aug.token_ids);
        prop_assume!(parsed.source.iter().all(|&t| t >= 6));
        let target: Vec<TokenId> = prefix[1..].to_vec();
        let batch = pad_batch(&[aug.clone()], &[target], PAD).unwrap();
        let fwd = forward_batch(&p, &batch, false, None).unwrap();
        let enc = encode(&aug, &p).unwrap();
        let out = decode_step(&prefix, &enc, &p).unwrap();
        let row = fwd.graph.value(fwd.p_final).row(prefix.len() - 1).to_vec();
        prop_assert!(max_diff(&row, &out.p_final) < 1e-10);
        let g = fwd.graph.value(fwd.gate).get(prefix.len() - 1, 0);
        prop_assert!((g - out.gate).abs() < 1e-12);
    }
}

#[test]
fn dropout_changes_training_pass_only() {
    let p = Parameters::<f32>::init(ModelConfig { dropout: 0.3, ..tiny(20) }).unwrap();
    let aug = AugmentedInput::build(&[7, 8], &[], &AugmentConfig { p_offset: 16, max_segments: 4, max_aug_len: 48 }).unwrap();
    let batch = pad_batch(&[aug], &[vec![9, 10]], PAD).unwrap();
    let a = forward_batch(&p, &batch, false, None).unwrap();
    let b = forward_batch(&p, &batch, false, None).unwrap();
    assert_eq!(a.graph.value(a.p_final), b.graph.value(b.p_final));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = forward_batch(&p, &batch, true, Some(&mut rng)).unwrap();
    assert_ne!(a.graph.value(a.p_final), c.graph.value(c.p_final));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = forward_batch(&p, &batch, true, Some(&mut rng)).unwrap();
    assert_eq!(c.graph.value(c.p_final), d.graph.value(d.p_final));
}
