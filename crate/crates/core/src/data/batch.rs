use alloc::vec::Vec;

use super::augment::AugmentedInput;
use super::vocab::{TokenId, BOS, EOS};
use crate::{Error, Result};

/// Right-padded batch with attention/loss masks.
///
/// Decoder rows are `<bos> y1 .. yT` as input and `y1 .. yT <eos>` as
/// target, so every example contributes `T + 1` predicted steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<AugmentedInput>,
    pub src_len: usize,
    pub tgt_len: usize,
    /// `size * src_len`, true on real (non-pad) encoder positions.
    pub src_mask: Vec<bool>,
    pub dec_input: Vec<TokenId>,
    pub dec_target: Vec<TokenId>,
    /// `size * tgt_len`, true on real decoder steps.
    pub tgt_mask: Vec<bool>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.inputs.len()
    }

    /// Number of real decoder steps.
    pub fn target_tokens(&self) -> usize {
        self.tgt_mask.iter().filter(|m| **m).count()
    }
}

pub fn pad_batch(inputs: &[AugmentedInput], targets: &[Vec<TokenId>], pad_id: TokenId) -> Result<Batch> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::LengthMismatch { expected: inputs.len(), found: targets.len() });
    }
    let src_len = inputs.iter().map(AugmentedInput::len).max().unwrap_or(0);
    let tgt_len = targets.iter().map(|t| t.len() + 1).max().unwrap_or(1);
    let n = inputs.len();
    let mut batch = Batch {
        inputs: Vec::with_capacity(n),
        src_len,
        tgt_len,
        src_mask: Vec::with_capacity(n * src_len),
        dec_input: Vec::with_capacity(n * tgt_len),
        dec_target: Vec::with_capacity(n * tgt_len),
        tgt_mask: Vec::with_capacity(n * tgt_len),
    };
    for (aug, tgt) in inputs.iter().zip(targets) {
        let mut padded = aug.padded(src_len);
        padded.token_ids[aug.len()..].iter_mut().for_each(|t| *t = pad_id);
        batch.src_mask.extend((0..src_len).map(|p| p < aug.valid_len()));
        batch.inputs.push(padded);
        for t in 0..tgt_len {
            let real = t <= tgt.len();
            batch.tgt_mask.push(real);
            batch.dec_input.push(match t {
                0 => BOS,
                _ if real => tgt[t - 1],
                _ => pad_id,
            });
            batch.dec_target.push(if t < tgt.len() {
                tgt[t]
            } else if t == tgt.len() {
                EOS
            } else {
                pad_id
            });
        }
    }
    Ok(batch)
}
