//! Constraint success rate, corpus BLEU, and paired bootstrap testing.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ConstraintMatch, TokenId};
use crate::{Error, Result};

/// One scored sentence: system output, gold reference, and the source-side
/// constraints with their target-side candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub hypothesis: Vec<TokenId>,
    pub reference: Vec<TokenId>,
    pub constraints: Vec<ConstraintMatch>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub evaluated: usize,
    pub satisfied: usize,
    /// Ambiguous constraints none of whose candidates occur in the reference.
    pub skipped: usize,
}

impl ConstraintCounts {
    pub fn percentage(&self) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            100.0 * self.satisfied as f64 / self.evaluated as f64
        }
    }

    fn add(&mut self, other: ConstraintCounts) {
        self.evaluated += other.evaluated;
        self.satisfied += other.satisfied;
        self.skipped += other.skipped;
    }
}

/// Whether `needle` occurs as a contiguous run inside `hay`.
pub fn contains_phrase(hay: &[TokenId], needle: &[TokenId]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Outcome for a single constraint: `None` when excluded from scoring.
pub fn constraint_satisfied(c: &ConstraintMatch, hypothesis: &[TokenId], reference: &[TokenId]) -> Option<bool> {
    if c.candidates.len() == 1 {
        return Some(contains_phrase(hypothesis, &c.candidates[0]));
    }
    let mut in_ref = c.candidates.iter().filter(|cand| contains_phrase(reference, cand)).peekable();
    in_ref.peek()?;
    Some(in_ref.any(|cand| contains_phrase(hypothesis, cand)))
}

/// Per-degree constraint counts over all records.
pub fn csr_counts(records: &[EvalRecord]) -> BTreeMap<usize, ConstraintCounts> {
    let mut out: BTreeMap<usize, ConstraintCounts> = BTreeMap::new();
    for r in records {
        for c in &r.constraints {
            let entry = out.entry(c.candidates.len()).or_default();
            match constraint_satisfied(c, &r.hypothesis, &r.reference) {
                None => entry.skipped += 1,
                Some(ok) => {
                    entry.evaluated += 1;
                    entry.satisfied += ok as usize;
                }
            }
        }
    }
    out
}

/// Overall constraint success rate (percentage) and counts.
pub fn csr(records: &[EvalRecord]) -> (f64, ConstraintCounts) {
    let mut total = ConstraintCounts::default();
    for c in csr_counts(records).into_values() {
        total.add(c);
    }
    (total.percentage(), total)
}

/// Success rate within each polysemy degree; degrees with nothing
/// evaluated are omitted.
pub fn csr_by_degree(records: &[EvalRecord]) -> BTreeMap<usize, f64> {
    csr_counts(records).into_iter().filter(|(_, c)| c.evaluated > 0).map(|(d, c)| (d, c.percentage())).collect()
}

const MAX_ORDER: usize = 4;
const SMOOTH_EPS: f64 = 1e-16;

/// Sufficient statistics of BLEU for one sentence or a whole corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn sentence(hyp: &[TokenId], reference: &[TokenId]) -> Self {
        let mut s = BleuStats { hyp_len: hyp.len() as u64, ref_len: reference.len() as u64, ..Default::default() };
        for n in 1..=MAX_ORDER {
            if hyp.len() < n {
                continue;
            }
            let mut ref_counts: BTreeMap<&[TokenId], u64> = BTreeMap::new();
            for g in reference.windows(n) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut hyp_counts: BTreeMap<&[TokenId], u64> = BTreeMap::new();
            for g in hyp.windows(n) {
                *hyp_counts.entry(g).or_default() += 1;
            }
            s.totals[n - 1] = (hyp.len() + 1 - n) as u64;
            s.matches[n - 1] =
                hyp_counts.iter().map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    /// BLEU-4 in `[0, 100]`. Orders for which the hypotheses contain no
    /// n-grams at all are left out of the geometric mean. A zero-match
    /// order contributes `1e-16` to its numerator, but only when some
    /// unigram matches; otherwise the score is 0.
    pub fn score(&self) -> f64 {
        if self.matches[0] == 0 || self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            let num = if self.matches[n] == 0 { SMOOTH_EPS } else { self.matches[n] as f64 };
            log_sum += libm::log(num / self.totals[n] as f64);
            orders += 1;
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c < r { libm::exp(1.0 - r / c) } else { 1.0 };
        100.0 * bp * libm::exp(log_sum / orders as f64)
    }
}

pub fn corpus_bleu<H: AsRef<[TokenId]>, R: AsRef<[TokenId]>>(hypotheses: &[H], references: &[R]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch { expected: references.len(), found: hypotheses.len() });
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&BleuStats::sentence(h.as_ref(), r.as_ref()));
    }
    Ok(total.score())
}

/// Position-wise agreement: matching positions over the longer length of
/// each pair, summed across the corpus, as a percentage.
pub fn token_accuracy<H: AsRef<[TokenId]>, R: AsRef<[TokenId]>>(hypotheses: &[H], references: &[R]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch { expected: references.len(), found: hypotheses.len() });
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hit += h.iter().zip(r).filter(|(a, b)| a == b).count();
        total += h.len().max(r.len());
    }
    Ok(if total == 0 { 100.0 } else { 100.0 * hit as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub p_threshold: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: 1000, p_threshold: 0.05, seed: 12345 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub bleu_a: f64,
    pub bleu_b: f64,
    pub resamples: usize,
    /// Resamples where A scored strictly higher / strictly lower than B.
    pub a_wins: usize,
    pub b_wins: usize,
    pub p_value: f64,
    pub significant: bool,
}

/// Paired bootstrap over sentence indices comparing corpus BLEU of two
/// systems. Two-sided p-value:
/// `min(1, 2 * (min(#[A >= B], #[B >= A]) + 1) / (resamples + 1))`.
pub fn paired_bootstrap<H: AsRef<[TokenId]>, R: AsRef<[TokenId]>>(
    system_a: &[H],
    system_b: &[H],
    references: &[R],
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let n = references.len();
    if system_a.len() != n || system_b.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: system_a.len().min(system_b.len()) });
    }
    if n == 0 {
        return Err(Error::EmptyInput("bootstrap records"));
    }
    if cfg.resamples == 0 {
        return Err(Error::InvalidConfig("resamples must be at least 1".into()));
    }
    let stats = |sys: &[H]| -> Vec<BleuStats> {
        sys.iter().zip(references).map(|(h, r)| BleuStats::sentence(h.as_ref(), r.as_ref())).collect()
    };
    let (sa, sb) = (stats(system_a), stats(system_b));
    let full = |s: &[BleuStats]| {
        let mut t = BleuStats::default();
        s.iter().for_each(|x| t.add(x));
        t.score()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut a_ge, mut b_ge, mut a_wins, mut b_wins) = (0usize, 0usize, 0usize, 0usize);
    let mut idx = vec![0usize; n];
    for _ in 0..cfg.resamples {
        idx.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
        let (mut ta, mut tb) = (BleuStats::default(), BleuStats::default());
        for &i in &idx {
            ta.add(&sa[i]);
            tb.add(&sb[i]);
        }
        let (a, b) = (ta.score(), tb.score());
        a_ge += (a >= b) as usize;
        b_ge += (b >= a) as usize;
        a_wins += (a > b) as usize;
        b_wins += (b > a) as usize;
    }
    let p = (2.0 * (a_ge.min(b_ge) + 1) as f64 / (cfg.resamples + 1) as f64).min(1.0);
    Ok(BootstrapResult {
        bleu_a: full(&sa),
        bleu_b: full(&sb),
        resamples: cfg.resamples,
        a_wins,
        b_wins,
        p_value: p,
        significant: p < cfg.p_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub csr: f64,
    pub csr_by_degree: BTreeMap<usize, f64>,
    pub bleu: f64,
    pub counts: BTreeMap<usize, ConstraintCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapResult>,
}

impl MetricsReport {
    pub fn compute(records: &[EvalRecord]) -> Self {
        let counts = csr_counts(records);
        let hyps: Vec<&[TokenId]> = records.iter().map(|r| r.hypothesis.as_slice()).collect();
        let refs: Vec<&[TokenId]> = records.iter().map(|r| r.reference.as_slice()).collect();
        MetricsReport {
            csr: csr(records).0,
            csr_by_degree: csr_by_degree(records),
            bleu: corpus_bleu(&hyps, &refs).expect("equal lengths"),
            counts,
            bootstrap: None,
        }
    }
}
