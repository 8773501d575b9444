use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::matching::ConstraintMatch;
use super::vocab::{TokenId, EOS, ISEP, PAD, SEP};
use crate::{Error, Result};

/// Role of each position in the augmented input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Source,
    Sep,
    Constraint,
    Isep,
    Eos,
    Pad,
}

/// Zero-based (constraint, candidate) pair owning a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandIndex {
    pub constraint: usize,
    pub candidate: usize,
}

/// Where one constraint's candidates sit in the augmented sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintBlock {
    /// Matched span in the source sentence.
    pub span: Range<usize>,
    /// Position range of each candidate, in candidate order.
    pub candidates: Vec<Range<usize>>,
}

impl ConstraintBlock {
    pub fn degree(&self) -> usize {
        self.candidates.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// First position id of the appended block; must exceed every source length.
    pub p_offset: usize,
    /// Segment embedding rows; constraint ordinals above clamp to the last.
    pub max_segments: usize,
    /// Budget for the full augmented sequence.
    pub max_aug_len: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { p_offset: 128, max_segments: 16, max_aug_len: 256 }
    }
}

/// Source followed by its constraint candidates:
/// `x1..xS <sep> c11 <isep> c12 <sep> c21 ... <eos>`, possibly right-padded.
///
/// Constraint `i` (zero-based) uses segment `min(i + 1, max_segments - 1)`
/// on all of its positions, including the leading `<sep>` and inner
/// `<isep>`s. Source positions use segment 0 and position ids `0..S`; the
/// appended positions count up from `p_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInput {
    pub token_ids: Vec<TokenId>,
    pub position_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    pub region: Vec<Region>,
    pub cand_index: Vec<Option<CandIndex>>,
    pub source_len: usize,
    pub blocks: Vec<ConstraintBlock>,
    /// Trailing constraints removed to respect `max_aug_len`.
    pub dropped: usize,
}

/// Token-level decomposition recovered from an augmented sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInput {
    pub source: Vec<TokenId>,
    pub constraints: Vec<Vec<Vec<TokenId>>>,
}

fn block_len(m: &ConstraintMatch) -> usize {
    1 + m.candidates.iter().map(Vec::len).sum::<usize>() + m.candidates.len().saturating_sub(1)
}

impl AugmentedInput {
    pub fn build(source: &[TokenId], matches: &[ConstraintMatch], cfg: &AugmentConfig) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptyInput("source sentence"));
        }
        if cfg.max_segments < 2 {
            return Err(Error::InvalidConfig("max_segments must be at least 2".into()));
        }
        let s = source.len();
        let limit = cfg.p_offset.min(cfg.max_aug_len.saturating_sub(1));
        if s > limit {
            return Err(Error::SourceTooLong { len: s, max: limit });
        }
        let mut total = s + 1;
        let mut kept = 0;
        for m in matches {
            let add = block_len(m);
            if total + add > cfg.max_aug_len {
                break;
            }
            total += add;
            kept += 1;
        }
        let mut aug = AugmentedInput {
            token_ids: Vec::with_capacity(total),
            position_ids: Vec::with_capacity(total),
            segment_ids: Vec::with_capacity(total),
            region: Vec::with_capacity(total),
            cand_index: Vec::with_capacity(total),
            source_len: s,
            blocks: Vec::with_capacity(kept),
            dropped: matches.len() - kept,
        };
        for (p, &tok) in source.iter().enumerate() {
            aug.push(tok, p, 0, Region::Source, None);
        }
        let mut next_pos = cfg.p_offset;
        for (i, m) in matches[..kept].iter().enumerate() {
            let seg = (i + 1).min(cfg.max_segments - 1);
            aug.push(SEP, next_pos, seg, Region::Sep, None);
            next_pos += 1;
            let mut ranges = Vec::with_capacity(m.candidates.len());
            for (j, cand) in m.candidates.iter().enumerate() {
                if j > 0 {
                    aug.push(ISEP, next_pos, seg, Region::Isep, None);
                    next_pos += 1;
                }
                let start = aug.token_ids.len();
                for &tok in cand {
                    let idx = CandIndex { constraint: i, candidate: j };
                    aug.push(tok, next_pos, seg, Region::Constraint, Some(idx));
                    next_pos += 1;
                }
                ranges.push(start..aug.token_ids.len());
            }
            aug.blocks.push(ConstraintBlock { span: m.span.clone(), candidates: ranges });
        }
        aug.push(EOS, next_pos, 0, Region::Eos, None);
        Ok(aug)
    }

    fn push(&mut self, tok: TokenId, pos: usize, seg: usize, region: Region, idx: Option<CandIndex>) {
        self.token_ids.push(tok);
        self.position_ids.push(pos);
        self.segment_ids.push(seg);
        self.region.push(region);
        self.cand_index.push(idx);
    }

    /// Total length including padding.
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Length without trailing padding.
    pub fn valid_len(&self) -> usize {
        self.region.iter().filter(|r| **r != Region::Pad).count()
    }

    pub fn num_constraints(&self) -> usize {
        self.blocks.len()
    }

    pub fn has_constraint_tokens(&self) -> bool {
        self.region.contains(&Region::Constraint)
    }

    /// Right-pads with `<pad>` to `len` positions.
    pub fn padded(&self, len: usize) -> AugmentedInput {
        let mut out = self.clone();
        while out.len() < len {
            out.push(PAD, 0, 0, Region::Pad, None);
        }
        out
    }

    /// Recovers the source tokens and the candidate lists from the token
    /// sequence alone.
    pub fn parse(token_ids: &[TokenId]) -> ParsedInput {
        let end = token_ids.iter().position(|&t| t == EOS || t == PAD).unwrap_or(token_ids.len());
        let body = &token_ids[..end];
        let mut parts = body.split(|&t| t == SEP);
        let source = parts.next().unwrap_or(&[]).to_vec();
        let constraints =
            parts.map(|block| block.split(|&t| t == ISEP).map(<[TokenId]>::to_vec).collect()).collect();
        ParsedInput { source, constraints }
    }
}
