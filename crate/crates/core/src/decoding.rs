//! Greedy and beam search over the mixed output distribution, with an
//! optional boost toward unambiguous dictionary candidates.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{AugmentedInput, Region, TokenId, BOS, EOS};
use crate::model::{decode_steps, encode, DecoderStepOutput, Parameters};
use crate::tensor::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Maximum emitted tokens, `<eos>` excluded; also capped by the model.
    pub max_len: usize,
    pub alpha: f64,
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_size: 5, max_len: 128, alpha: 0.0, length_penalty: 0.0 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidConfig("beam_size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.length_penalty.is_finite() {
            return Err(Error::InvalidConfig("alpha must be >= 0 and length_penalty finite".into()));
        }
        Ok(())
    }
}

/// A (partial) output sequence. Finished hypotheses end with `<eos>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
    /// Gate value at each step that produced a token.
    pub gates: Vec<f64>,
}

impl BeamHypothesis {
    /// Tokens without the closing `<eos>`.
    pub fn output(&self) -> &[TokenId] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) if self.finished => rest,
            _ => &self.tokens,
        }
    }

    /// `log_prob / len^penalty`, with `<eos>` counted in the length.
    pub fn score(&self, length_penalty: f64) -> f64 {
        if length_penalty == 0.0 {
            return self.log_prob;
        }
        self.log_prob / libm::pow(self.tokens.len().max(1) as f64, length_penalty)
    }
}

/// Multiplies `p(v)` by `exp(alpha * m(v))`, where `m(v)` is the step's
/// attention mass on degree-1 candidate positions holding `v`, then
/// renormalizes.
pub fn alpha_boost<S: Scalar>(p_final: &[S], alpha: f64, step: &DecoderStepOutput<S>, aug: &AugmentedInput) -> Vec<S> {
    let mut out = p_final.to_vec();
    if alpha == 0.0 {
        return out;
    }
    let mut mass = vec![0.0f64; out.len()];
    let mut any = false;
    for (pos, idx) in aug.cand_index.iter().enumerate() {
        let Some(idx) = idx else { continue };
        if aug.region[pos] == Region::Constraint && aug.blocks[idx.constraint].degree() == 1 {
            mass[aug.token_ids[pos] as usize] += step.alpha[pos].as_f64();
            any = true;
        }
    }
    if !any {
        return out;
    }
    let mut total = S::zero();
    for (p, &m) in out.iter_mut().zip(&mass) {
        if m != 0.0 {
            *p *= S::of(libm::exp(alpha * m));
        }
        total += *p;
    }
    out.iter_mut().for_each(|p| *p /= total);
    out
}

fn steps_for<S: Scalar>(
    hyps: &[&BeamHypothesis],
    enc: &crate::model::EncoderOutput<S>,
    params: &Parameters<S>,
    alpha: f64,
) -> Result<Vec<(Vec<S>, f64)>> {
    let prefixes: Vec<Vec<TokenId>> =
        hyps.iter().map(|h| core::iter::once(BOS).chain(h.tokens.iter().copied()).collect()).collect();
    let refs: Vec<&[TokenId]> = prefixes.iter().map(Vec::as_slice).collect();
    let outs = decode_steps(&refs, enc, params)?;
    Ok(outs
        .into_iter()
        .map(|o| {
            let p = alpha_boost(&o.p_final, alpha, &o, &enc.aug);
            (p, o.gate.as_f64())
        })
        .collect())
}

fn max_steps<S: Scalar>(params: &Parameters<S>, cfg: &DecodeConfig) -> usize {
    cfg.max_len.min(params.config().max_tgt_len)
}

/// Argmax decoding; ties go to the lowest token id.
pub fn greedy_search<S: Scalar>(aug: &AugmentedInput, params: &Parameters<S>, cfg: &DecodeConfig) -> Result<BeamHypothesis> {
    cfg.validate()?;
    let enc = encode(aug, params)?;
    let mut hyp = BeamHypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false, gates: Vec::new() };
    for _ in 0..max_steps(params, cfg) {
        let (p, g) = steps_for(&[&hyp], &enc, params, cfg.alpha)?.pop().expect("one hypothesis");
        let mut best = 0;
        for (v, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = v;
            }
        }
        hyp.tokens.push(best as TokenId);
        hyp.log_prob += libm::log(p[best].as_f64());
        hyp.gates.push(g);
        if best as TokenId == EOS {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

pub fn greedy_decode<S: Scalar>(aug: &AugmentedInput, params: &Parameters<S>, cfg: &DecodeConfig) -> Result<Vec<TokenId>> {
    Ok(greedy_search(aug, params, cfg)?.output().to_vec())
}

struct Candidate {
    log_prob: f64,
    /// Index into the previous beam.
    parent: usize,
    /// Appended token, `None` for a carried-over finished hypothesis.
    token: Option<TokenId>,
}

fn cmp_candidates(a: &Candidate, b: &Candidate, beam: &[BeamHypothesis]) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| {
            let ta = beam[a.parent].tokens.iter().copied().chain(a.token);
            let tb = beam[b.parent].tokens.iter().copied().chain(b.token);
            ta.cmp(tb)
        })
}

/// Beam search; returns the final beam ranked by length-penalized score,
/// ties broken by token sequence.
pub fn beam_decode<S: Scalar>(
    aug: &AugmentedInput,
    params: &Parameters<S>,
    cfg: &DecodeConfig,
) -> Result<Vec<BeamHypothesis>> {
    cfg.validate()?;
    let enc = encode(aug, params)?;
    let mut beam = vec![BeamHypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false, gates: Vec::new() }];
    for _ in 0..max_steps(params, cfg) {
        let live: Vec<usize> = (0..beam.len()).filter(|&i| !beam[i].finished).collect();
        if live.is_empty() {
            break;
        }
        let refs: Vec<&BeamHypothesis> = live.iter().map(|&i| &beam[i]).collect();
        let steps = steps_for(&refs, &enc, params, cfg.alpha)?;
        let mut cands: Vec<Candidate> = (0..beam.len())
            .filter(|&i| beam[i].finished)
            .map(|i| Candidate { log_prob: beam[i].log_prob, parent: i, token: None })
            .collect();
        for (&i, (p, _)) in live.iter().zip(&steps) {
            for (v, &x) in p.iter().enumerate() {
                let lp = beam[i].log_prob + libm::log(x.as_f64());
                cands.push(Candidate { log_prob: lp, parent: i, token: Some(v as TokenId) });
            }
        }
        cands.sort_by(|a, b| cmp_candidates(a, b, &beam));
        cands.truncate(cfg.beam_size);
        let gate_of = |parent: usize| live.iter().position(|&i| i == parent).map(|k| steps[k].1);
        beam = cands
            .into_iter()
            .map(|c| {
                let mut h = beam[c.parent].clone();
                if let Some(t) = c.token {
                    h.tokens.push(t);
                    h.log_prob = c.log_prob;
                    h.gates.push(gate_of(c.parent).expect("live parent"));
                    h.finished = t == EOS;
                }
                h
            })
            .collect();
    }
    let pen = cfg.length_penalty;
    beam.sort_by(|a, b| b.score(pen).total_cmp(&a.score(pen)).then_with(|| a.tokens.cmp(&b.tokens)));
    Ok(beam)
}
