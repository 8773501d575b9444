//! Output heads evaluated on plain vectors for a single decoding step.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{AugmentedInput, Region};
use crate::tensor::{dot, sigmoid, softmax_in_place, Matrix, Scalar};
use crate::{Error, Result};

const MASS_FLOOR: f64 = 1e-12;

/// `softmax(s · W)`.
pub fn pred_distribution<S: Scalar>(s: &[S], w: &Matrix<S>) -> Vec<S> {
    assert_eq!(s.len(), w.rows());
    let mut logits = vec![S::zero(); w.cols()];
    for (&x, row) in s.iter().zip(w.data().chunks_exact(w.cols())) {
        for (l, &wv) in logits.iter_mut().zip(row) {
            *l += x * wv;
        }
    }
    softmax_in_place(&mut logits);
    logits
}

/// Attention mass on constraint-token positions, scattered onto their
/// vocabulary ids and renormalized. `None` when nothing can be copied.
pub fn copy_distribution<S: Scalar>(alpha: &[S], aug: &AugmentedInput, vocab_size: usize) -> Option<Vec<S>> {
    let mut p = vec![S::zero(); vocab_size];
    let mut mass = S::zero();
    for (pos, &a) in alpha.iter().enumerate().take(aug.len()) {
        if aug.region[pos] == Region::Constraint {
            p[aug.token_ids[pos] as usize] += a;
            mass += a;
        }
    }
    if !aug.has_constraint_tokens() || mass.as_f64() < MASS_FLOOR {
        return None;
    }
    p.iter_mut().for_each(|x| *x /= mass);
    Some(p)
}

/// `alpha`-weighted sum of encoder rows.
pub fn context_vector<S: Scalar>(alpha: &[S], h: &Matrix<S>) -> Vec<S> {
    let mut c = vec![S::zero(); h.cols()];
    for (r, &a) in alpha.iter().enumerate() {
        if a != S::zero() {
            for (ci, &x) in c.iter_mut().zip(h.row(r)) {
                *ci += a * x;
            }
        }
    }
    c
}

/// Mean of the encoder states over the positions of candidate `j` of
/// constraint `i` (both zero-based).
pub fn candidate_embedding<S: Scalar>(h: &Matrix<S>, aug: &AugmentedInput, i: usize, j: usize) -> Result<Vec<S>> {
    let missing = Error::MissingCandidate { constraint: i, candidate: j };
    let range = aug.blocks.get(i).and_then(|b| b.candidates.get(j)).ok_or(missing.clone())?;
    if range.is_empty() || range.end > h.rows() {
        return Err(missing);
    }
    let mut e = vec![S::zero(); h.cols()];
    for r in range.clone() {
        for (ei, &x) in e.iter_mut().zip(h.row(r)) {
            *ei += x;
        }
    }
    let n = S::of(range.len() as f64);
    e.iter_mut().for_each(|x| *x /= n);
    Ok(e)
}

/// Per-constraint candidate probabilities and their vocabulary projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Disambiguation<S> {
    pub per_candidate: Vec<Vec<S>>,
    pub distribution: Option<Vec<S>>,
}

pub fn dis_distribution<S: Scalar>(
    c: &[S],
    h: &Matrix<S>,
    aug: &AugmentedInput,
    vocab_size: usize,
) -> Result<Disambiguation<S>> {
    let n = aug.blocks.len();
    let mut per_candidate = Vec::with_capacity(n);
    for (i, block) in aug.blocks.iter().enumerate() {
        let mut scores = Vec::with_capacity(block.degree());
        for j in 0..block.degree() {
            scores.push(dot(c, &candidate_embedding(h, aug, i, j)?));
        }
        softmax_in_place(&mut scores);
        per_candidate.push(scores);
    }
    if n == 0 {
        return Ok(Disambiguation { per_candidate, distribution: None });
    }
    let mut p = vec![S::zero(); vocab_size];
    let inv_n = S::one() / S::of(n as f64);
    for (block, probs) in aug.blocks.iter().zip(&per_candidate) {
        for (range, &pij) in block.candidates.iter().zip(probs) {
            let share = pij * inv_n / S::of(range.len() as f64);
            for pos in range.clone() {
                p[aug.token_ids[pos] as usize] += share;
            }
        }
    }
    Ok(Disambiguation { per_candidate, distribution: Some(p) })
}

/// Borrowed gate weights: `w1` is `2d x hidden`, `b1` is `1 x hidden`,
/// `w2` is `hidden x 1`, `b2` is `1 x 1`.
#[derive(Debug, Clone, Copy)]
pub struct GateWeights<'a, S> {
    pub w1: &'a Matrix<S>,
    pub b1: &'a Matrix<S>,
    pub w2: &'a Matrix<S>,
    pub b2: &'a Matrix<S>,
}

/// `sigmoid(w2 · relu(W1 [c; s] + b1) + b2)`.
pub fn gate_value<S: Scalar>(c: &[S], s: &[S], gate: GateWeights<'_, S>) -> S {
    let hidden = gate.w1.cols();
    assert_eq!(c.len() + s.len(), gate.w1.rows());
    let mut z = gate.b1.data().to_vec();
    for (&x, row) in c.iter().chain(s).zip(gate.w1.data().chunks_exact(hidden)) {
        for (zi, &w) in z.iter_mut().zip(row) {
            *zi += x * w;
        }
    }
    let mut out = gate.b2.data()[0];
    for (zi, &w) in z.iter().zip(gate.w2.data()) {
        out += zi.max(S::zero()) * w;
    }
    sigmoid(out)
}

/// `g * p_pred + (1 - g) * aux`, where `aux` is the mean of the present
/// heads. With no heads the prediction passes through untouched.
pub fn mix_distributions<S: Scalar>(p_pred: &[S], p_copy: Option<&[S]>, p_dis: Option<&[S]>, g: S) -> Vec<S> {
    let half = S::of(0.5);
    let rest = S::one() - g;
    match (p_copy, p_dis) {
        (None, None) => p_pred.to_vec(),
        (Some(a), Some(b)) => {
            p_pred.iter().zip(a).zip(b).map(|((&p, &x), &y)| g * p + rest * (half * x + half * y)).collect()
        }
        (Some(a), None) | (None, Some(a)) => p_pred.iter().zip(a).map(|(&p, &x)| g * p + rest * x).collect(),
    }
}
