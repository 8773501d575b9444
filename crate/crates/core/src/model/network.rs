use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::heads::{self, GateWeights};
use super::params::{AttentionIds, FfnIds, NormIds};
use super::Parameters;
use crate::data::{pad_batch, AugmentedInput, Batch, Example, Region, TokenId, BOS, PAD};
use crate::tensor::{AttentionSpec, Graph, Matrix, Scalar, Var};
use crate::{Error, Result};

/// Lazily places parameters on a graph, as trainable leaves or constants.
struct Net<'p, 'r, S: Scalar> {
    g: Graph<S>,
    params: &'p Parameters<S>,
    vars: Vec<Option<Var>>,
    trainable: bool,
    dropout: Option<(f64, &'r mut ChaCha8Rng)>,
}

impl<'p, 'r, S: Scalar> Net<'p, 'r, S> {
    fn new(params: &'p Parameters<S>, trainable: bool, rng: Option<&'r mut ChaCha8Rng>) -> Self {
        let rate = params.config().dropout;
        Net {
            g: Graph::new(),
            params,
            vars: vec![None; params.tensors().len()],
            trainable,
            dropout: rng.filter(|_| rate > 0.0).map(|r| (rate, r)),
        }
    }

    fn p(&mut self, idx: usize) -> Var {
        if let Some(v) = self.vars[idx] {
            return v;
        }
        let value = self.params.tensor(idx).clone();
        let v = if self.trainable { self.g.param(value) } else { self.g.constant(value) };
        self.vars[idx] = Some(v);
        v
    }

    fn drop(&mut self, x: Var) -> Var {
        let Some((rate, rng)) = self.dropout.as_mut() else { return x };
        let n = self.g.value(x).data().len();
        let keep = S::of(1.0 / (1.0 - *rate));
        let mask = (0..n).map(|_| if rng.gen::<f64>() < *rate { S::zero() } else { keep }).collect();
        self.g.dropout(x, mask)
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Var {
        let (w, b) = (self.p(w), self.p(b));
        let y = self.g.matmul(x, w, false);
        self.g.add_row(y, b)
    }

    fn norm(&mut self, x: Var, ids: NormIds) -> Var {
        let (gamma, beta) = (self.p(ids.gamma), self.p(ids.beta));
        self.g.layer_norm(x, gamma, beta)
    }

    /// Residual sub-layer: `norm(x + dropout(y))`.
    fn add_norm(&mut self, x: Var, y: Var, ids: NormIds) -> Var {
        let y = self.drop(y);
        let sum = self.g.add(x, y);
        self.norm(sum, ids)
    }

    /// Returns the projected output and, when requested, the head-averaged
    /// attention probabilities.
    fn attention(&mut self, xq: Var, xkv: Var, ids: AttentionIds, spec: AttentionSpec) -> (Var, Option<Var>) {
        let d = self.params.config().d_model;
        let k_len = spec.k_len;
        let emit = spec.emit_average;
        let q = self.linear(xq, ids.wq, ids.bq);
        let k = self.linear(xkv, ids.wk, ids.bk);
        let v = self.linear(xkv, ids.wv, ids.bv);
        let att = self.g.attention(q, k, v, spec);
        let (ctx, avg) = if emit {
            (self.g.slice_cols(att, 0..d), Some(self.g.slice_cols(att, d..d + k_len)))
        } else {
            (att, None)
        };
        (self.linear(ctx, ids.wo, ids.bo), avg)
    }

    fn ffn(&mut self, x: Var, ids: FfnIds) -> Var {
        let h = self.linear(x, ids.w1, ids.b1);
        let h = self.g.relu(h);
        self.linear(h, ids.w2, ids.b2)
    }

    fn lookup(&mut self, table: usize, ids: Vec<usize>, name: &'static str) -> Result<Var> {
        let size = self.params.tensor(table).rows();
        if let Some(&id) = ids.iter().find(|&&i| i >= size) {
            return Err(Error::IdOutOfRange { table: name, id, size });
        }
        let t = self.p(table);
        Ok(self.g.gather(t, ids))
    }

    fn encoder(&mut self, inputs: &[&AugmentedInput], len: usize, mask: Vec<bool>) -> Result<Var> {
        let layout = self.params.layout().clone();
        let tok = inputs.iter().flat_map(|a| a.token_ids.iter().map(|&t| t as usize)).collect();
        let pos = inputs.iter().flat_map(|a| a.position_ids.iter().copied()).collect();
        let seg = inputs.iter().flat_map(|a| a.segment_ids.iter().copied()).collect();
        let e_tok = self.lookup(layout.tok_emb, tok, "token embedding")?;
        let e_pos = self.lookup(layout.pos_emb, pos, "position embedding")?;
        let e_seg = self.lookup(layout.seg_emb, seg, "segment embedding")?;
        let x = self.g.add(e_tok, e_pos);
        let x = self.g.add(x, e_seg);
        let mut x = self.drop(x);
        let spec = AttentionSpec {
            batch: inputs.len(),
            q_len: len,
            k_len: len,
            heads: self.params.config().n_heads,
            causal: false,
            key_mask: mask,
            emit_average: false,
        };
        for (l, ids) in layout.encoder.iter().enumerate() {
            let (a, _) = self.attention(x, x, ids.self_attn, spec.clone());
            x = self.add_norm(x, a, ids.norm1);
            let f = self.ffn(x, ids.ffn);
            x = self.add_norm(x, f, ids.norm2);
            if !self.g.value(x).is_finite() {
                return Err(Error::NonFinite { stage: "encoder layer", index: l });
            }
        }
        Ok(x)
    }

    /// Runs the decoder over `batch` stacked target rows of length
    /// `tgt_len`; returns final states and last-layer cross-attention.
    fn decoder(
        &mut self,
        dec_input: &[TokenId],
        batch: usize,
        tgt_len: usize,
        h: Var,
        src_len: usize,
        src_mask: Vec<bool>,
    ) -> Result<(Var, Var)> {
        let layout = self.params.layout().clone();
        let heads = self.params.config().n_heads;
        let tok = dec_input.iter().map(|&t| t as usize).collect();
        let pos = (0..batch).flat_map(|_| 0..tgt_len).collect();
        let e_tok = self.lookup(layout.tok_emb, tok, "token embedding")?;
        let e_pos = self.lookup(layout.pos_emb, pos, "position embedding")?;
        let y = self.g.add(e_tok, e_pos);
        let mut y = self.drop(y);
        let self_spec = AttentionSpec {
            batch,
            q_len: tgt_len,
            k_len: tgt_len,
            heads,
            causal: true,
            key_mask: vec![true; batch * tgt_len],
            emit_average: false,
        };
        let last = layout.decoder.len() - 1;
        let mut alpha = None;
        for (l, ids) in layout.decoder.iter().enumerate() {
            let (a, _) = self.attention(y, y, ids.self_attn, self_spec.clone());
            y = self.add_norm(y, a, ids.norm1);
            let cross_spec = AttentionSpec {
                batch,
                q_len: tgt_len,
                k_len: src_len,
                heads,
                causal: false,
                key_mask: src_mask.clone(),
                emit_average: l == last,
            };
            let (c, avg) = self.attention(y, h, ids.cross_attn, cross_spec);
            alpha = avg.or(alpha);
            y = self.add_norm(y, c, ids.norm2);
            let f = self.ffn(y, ids.ffn);
            y = self.add_norm(y, f, ids.norm3);
            if !self.g.value(y).is_finite() {
                return Err(Error::NonFinite { stage: "decoder layer", index: l });
            }
        }
        Ok((y, alpha.expect("at least one decoder layer")))
    }
}

/// Differentiable forward pass over a padded batch.
///
/// Row `b * tgt_len + t` of every per-step output belongs to example `b`,
/// decoder step `t`.
pub struct BatchForward<S: Scalar> {
    pub graph: Graph<S>,
    /// Graph leaf of each parameter tensor, when it took part.
    pub param_vars: Vec<Option<Var>>,
    pub p_final: Var,
    pub p_pred: Var,
    pub p_copy: Option<Var>,
    pub p_dis: Option<Var>,
    pub gate: Var,
    pub alpha: Var,
    /// Which examples carry at least one constraint.
    pub constrained: Vec<bool>,
}

/// Builds the full training-time graph. Parameters become trainable leaves
/// when `trainable`; dropout is active only when `rng` is given.
pub fn forward_batch<S: Scalar>(
    params: &Parameters<S>,
    batch: &Batch,
    trainable: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<BatchForward<S>> {
    let cfg = *params.config();
    let n = batch.size();
    let (lk, tl, v) = (batch.src_len, batch.tgt_len, cfg.vocab_size);
    let mut net = Net::new(params, trainable, rng);
    let inputs: Vec<&AugmentedInput> = batch.inputs.iter().collect();
    let h = net.encoder(&inputs, lk, batch.src_mask.clone())?;
    let (s, alpha) = net.decoder(&batch.dec_input, n, tl, h, lk, batch.src_mask.clone())?;

    let layout = params.layout().clone();
    let w = net.p(layout.out_proj);
    let logits = net.g.matmul(s, w, false);
    let p_pred = net.g.softmax(logits);
    let c = net.g.batch_matmul(alpha, h, n, false);
    let cs = net.g.concat_cols(c, s);
    let z = net.linear(cs, layout.gate.w1, layout.gate.b1);
    let z = net.g.relu(z);
    let gz = net.linear(z, layout.gate.w2, layout.gate.b2);
    let gate = net.g.sigmoid(gz);

    let constrained: Vec<bool> = batch.inputs.iter().map(|a| !a.blocks.is_empty()).collect();
    let n_cands: Vec<usize> = batch.inputs.iter().map(|a| a.blocks.iter().map(|b| b.degree()).sum()).collect();
    let cmax = n_cands.iter().copied().max().unwrap_or(0);

    let (p_final, p_copy, p_dis) = if cmax == 0 {
        (p_pred, None, None)
    } else {
        let mut scatter = Matrix::zeros(n * lk, v);
        let mut pool = Matrix::zeros(n * cmax, lk);
        let mut project = Matrix::zeros(n * cmax, v);
        let mut groups = Vec::with_capacity(n);
        for (b, aug) in batch.inputs.iter().enumerate() {
            for (p, region) in aug.region.iter().enumerate() {
                if *region == Region::Constraint {
                    scatter.set(b * lk + p, aug.token_ids[p] as usize, S::one());
                }
            }
            let inv_n = 1.0 / aug.blocks.len().max(1) as f64;
            let mut col = 0;
            let mut block_groups = Vec::with_capacity(aug.blocks.len());
            for block in &aug.blocks {
                block_groups.push(col..col + block.degree());
                for range in &block.candidates {
                    let row = b * cmax + col;
                    let share = 1.0 / range.len() as f64;
                    for p in range.clone() {
                        pool.set(row, p, S::of(share));
                        let t = aug.token_ids[p] as usize;
                        project.set(row, t, project.get(row, t) + S::of(share * inv_n));
                    }
                    col += 1;
                }
            }
            groups.push(block_groups);
        }
        let scatter = net.g.constant(scatter);
        let raw = net.g.batch_matmul(alpha, scatter, n, false);
        let p_copy = net.g.row_normalize(raw);
        let pool = net.g.constant(pool);
        let e = net.g.batch_matmul(pool, h, n, false);
        let scores = net.g.batch_matmul(c, e, n, true);
        let probs = net.g.group_softmax(scores, groups, tl);
        let project = net.g.constant(project);
        let p_dis = net.g.batch_matmul(probs, project, n, false);

        let half = S::of(0.5);
        let copy_rows = net.g.value(p_copy);
        let mut wa = vec![S::zero(); n * tl];
        let mut wb = vec![S::zero(); n * tl];
        let mut use_mix = vec![false; n * tl];
        for r in 0..n * tl {
            if !constrained[r / tl] {
                continue;
            }
            use_mix[r] = true;
            let has_copy = copy_rows.row(r).iter().any(|&x| x > S::zero());
            if has_copy {
                wa[r] = half;
                wb[r] = half;
            } else {
                wb[r] = S::one();
            }
        }
        let aux = net.g.combine(p_copy, p_dis, wa, wb);
        let rest = net.g.affine(gate, -S::one(), S::one());
        let a = net.g.mul_col(p_pred, gate);
        let b = net.g.mul_col(aux, rest);
        let mixed = net.g.add(a, b);
        (net.g.select_rows(mixed, p_pred, use_mix), Some(p_copy), Some(p_dis))
    };

    Ok(BatchForward {
        graph: net.g,
        param_vars: net.vars,
        p_final,
        p_pred,
        p_copy,
        p_dis,
        gate,
        alpha,
        constrained,
    })
}

/// Encoder states for one augmented input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<S> {
    pub h: Matrix<S>,
    pub aug: AugmentedInput,
    pub attn_mask: Vec<bool>,
}

/// Everything computed at one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStepOutput<S> {
    pub s: Vec<S>,
    pub alpha: Vec<S>,
    pub c: Vec<S>,
    pub p_pred: Vec<S>,
    pub p_copy: Option<Vec<S>>,
    pub p_dis: Option<Vec<S>>,
    pub dis_per_candidate: Vec<Vec<S>>,
    pub gate: S,
    pub p_final: Vec<S>,
}

/// Sum of token, position, and segment embeddings for each position.
pub fn embed<S: Scalar>(aug: &AugmentedInput, params: &Parameters<S>) -> Result<Matrix<S>> {
    let layout = params.layout();
    let tables = [
        (layout.tok_emb, "token embedding"),
        (layout.pos_emb, "position embedding"),
        (layout.seg_emb, "segment embedding"),
    ];
    let d = params.config().d_model;
    let mut out = Matrix::zeros(aug.len(), d);
    for t in 0..aug.len() {
        let ids = [aug.token_ids[t] as usize, aug.position_ids[t], aug.segment_ids[t]];
        for (&id, &(table, name)) in ids.iter().zip(&tables) {
            let m = params.tensor(table);
            if id >= m.rows() {
                return Err(Error::IdOutOfRange { table: name, id, size: m.rows() });
            }
            for (o, &x) in out.row_mut(t).iter_mut().zip(m.row(id)) {
                *o += x;
            }
        }
    }
    Ok(out)
}

/// Evaluation-mode encoder pass.
pub fn encode<S: Scalar>(aug: &AugmentedInput, params: &Parameters<S>) -> Result<EncoderOutput<S>> {
    if aug.is_empty() {
        return Err(Error::EmptyInput("augmented input"));
    }
    let mask: Vec<bool> = aug.region.iter().map(|r| *r != Region::Pad).collect();
    let mut net = Net::new(params, false, None);
    let h = net.encoder(&[aug], aug.len(), mask.clone())?;
    let h = net.g.value(h).clone();
    Ok(EncoderOutput { h, aug: aug.clone(), attn_mask: mask })
}

/// One decoding step for a single prefix.
pub fn decode_step<S: Scalar>(
    prefix: &[TokenId],
    enc: &EncoderOutput<S>,
    params: &Parameters<S>,
) -> Result<DecoderStepOutput<S>> {
    Ok(decode_steps(&[prefix], enc, params)?.pop().expect("one prefix"))
}

/// Decoding step for several equal-length prefixes over the same source.
pub fn decode_steps<S: Scalar>(
    prefixes: &[&[TokenId]],
    enc: &EncoderOutput<S>,
    params: &Parameters<S>,
) -> Result<Vec<DecoderStepOutput<S>>> {
    let cfg = params.config();
    let Some(first) = prefixes.first() else { return Ok(Vec::new()) };
    let t = first.len();
    if prefixes.iter().any(|p| p.len() != t || p.first() != Some(&BOS)) {
        return Err(Error::InvalidConfig("prefixes must share a length and start with <bos>".into()));
    }
    if t > cfg.max_tgt_len {
        return Err(Error::InvalidConfig(alloc::format!(
            "prefix length {t} exceeds max_tgt_len {}",
            cfg.max_tgt_len
        )));
    }
    let n = prefixes.len();
    let lk = enc.h.rows();
    let mut h_rep = Matrix::zeros(n * lk, enc.h.cols());
    for b in 0..n {
        h_rep.data_mut()[b * lk * enc.h.cols()..(b + 1) * lk * enc.h.cols()].copy_from_slice(enc.h.data());
    }
    let mask: Vec<bool> = (0..n).flat_map(|_| enc.attn_mask.iter().copied()).collect();
    let dec_input: Vec<TokenId> = prefixes.iter().flat_map(|p| p.iter().copied()).collect();
    let mut net = Net::new(params, false, None);
    let h = net.g.constant(h_rep);
    let (s, alpha) = net.decoder(&dec_input, n, t, h, lk, mask).map_err(|e| match e {
        Error::NonFinite { .. } => Error::NonFinite { stage: "decoder step", index: t - 1 },
        e => e,
    })?;
    let (s, alpha) = (net.g.value(s), net.g.value(alpha));

    let layout = params.layout();
    let gate_w = GateWeights {
        w1: params.tensor(layout.gate.w1),
        b1: params.tensor(layout.gate.b1),
        w2: params.tensor(layout.gate.w2),
        b2: params.tensor(layout.gate.b2),
    };
    let mut out = Vec::with_capacity(n);
    for b in 0..n {
        let row = b * t + t - 1;
        let s_t = s.row(row).to_vec();
        let alpha_t = alpha.row(row).to_vec();
        let c = heads::context_vector(&alpha_t, &enc.h);
        let p_pred = heads::pred_distribution(&s_t, params.tensor(layout.out_proj));
        let p_copy = heads::copy_distribution(&alpha_t, &enc.aug, cfg.vocab_size);
        let dis = heads::dis_distribution(&c, &enc.h, &enc.aug, cfg.vocab_size)?;
        let gate = heads::gate_value(&c, &s_t, gate_w);
        let p_final = heads::mix_distributions(&p_pred, p_copy.as_deref(), dis.distribution.as_deref(), gate);
        if !p_final.iter().all(|x| x.is_finite()) || !gate.is_finite() {
            return Err(Error::NonFinite { stage: "decoder step", index: t - 1 });
        }
        out.push(DecoderStepOutput {
            s: s_t,
            alpha: alpha_t,
            c,
            p_pred,
            p_copy,
            p_dis: dis.distribution,
            dis_per_candidate: dis.per_candidate,
            gate,
            p_final,
        });
    }
    Ok(out)
}

/// Builds the augmented input for an example under the model's limits.
pub fn augment_example<S: Scalar>(example: &Example, params: &Parameters<S>) -> Result<AugmentedInput> {
    AugmentedInput::build(&example.source, &example.constraints, &params.config().augment_config())
}

/// Final distributions for every step of the gold target, `<eos>` included.
pub fn forward_teacher_forced<S: Scalar>(example: &Example, params: &Parameters<S>) -> Result<Vec<Vec<S>>> {
    if example.target.len() + 1 > params.config().max_tgt_len {
        return Err(Error::InvalidConfig("target longer than max_tgt_len".into()));
    }
    let aug = augment_example(example, params)?;
    let batch = pad_batch(&[aug], core::slice::from_ref(&example.target), PAD)?;
    let fwd = forward_batch(params, &batch, false, None)?;
    let p = fwd.graph.value(fwd.p_final);
    Ok((0..p.rows()).map(|r| p.row(r).to_vec()).collect())
}
