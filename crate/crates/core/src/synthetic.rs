//! Generated parallel corpora with known dictionary behaviour, used to
//! exercise the copy and disambiguation heads end to end.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DictEntry, Dictionary, Pair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dictionary: Dictionary,
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
}

/// Word-for-word translation where `entries` source words have a
/// one-candidate dictionary entry and fillers translate by a fixed map
/// that only the training data reveals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopyTaskConfig {
    pub pairs: usize,
    pub held_out: usize,
    pub entries: usize,
    pub fillers: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a position holds a dictionary word.
    pub dict_rate: f64,
    pub seed: u64,
}

impl Default for CopyTaskConfig {
    fn default() -> Self {
        CopyTaskConfig { pairs: 2000, held_out: 200, entries: 40, fillers: 20, min_len: 4, max_len: 8, dict_rate: 0.4, seed: 1 }
    }
}

/// Every ambiguous source word has two candidates; a marker token
/// somewhere in the sentence selects which sense all its ambiguous words
/// take. A fraction of sentences holds no ambiguous word.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisambiguationTaskConfig {
    pub pairs: usize,
    pub held_out: usize,
    pub ambiguous: usize,
    pub fillers: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Share of sentences without any ambiguous word.
    pub unmatched_rate: f64,
    pub seed: u64,
}

impl Default for DisambiguationTaskConfig {
    fn default() -> Self {
        DisambiguationTaskConfig {
            pairs: 4000,
            held_out: 400,
            ambiguous: 10,
            fillers: 20,
            min_len: 4,
            max_len: 8,
            unmatched_rate: 0.1,
            seed: 1,
        }
    }
}

fn check_sizes(pairs: usize, held_out: usize, min_len: usize, max_len: usize) -> Result<()> {
    if held_out >= pairs {
        return Err(Error::InvalidConfig("held_out must be smaller than pairs".into()));
    }
    if min_len < 2 || max_len < min_len {
        return Err(Error::InvalidConfig("need 2 <= min_len <= max_len".into()));
    }
    Ok(())
}

fn split(mut pairs: Vec<Pair>, held_out: usize, dictionary: Dictionary) -> SyntheticCorpus {
    let test = pairs.split_off(pairs.len() - held_out);
    SyntheticCorpus { dictionary, train: pairs, test }
}

pub fn copy_task(cfg: &CopyTaskConfig) -> Result<SyntheticCorpus> {
    check_sizes(cfg.pairs, cfg.held_out, cfg.min_len, cfg.max_len)?;
    if cfg.entries == 0 || cfg.fillers == 0 {
        return Err(Error::InvalidConfig("entries and fillers must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entries = (0..cfg.entries)
        .map(|i| DictEntry { source: alloc::vec![format!("s{i}")], candidates: alloc::vec![alloc::vec![format!("T{i}")]] })
        .collect();
    let dictionary = Dictionary::from_entries(entries)?;
    let pairs = (0..cfg.pairs)
        .map(|_| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let (mut source, mut target) = (Vec::with_capacity(len), Vec::with_capacity(len));
            for _ in 0..len {
                if rng.gen_bool(cfg.dict_rate) {
                    let i = rng.gen_range(0..cfg.entries);
                    source.push(format!("s{i}"));
                    target.push(format!("T{i}"));
                } else {
                    let i = rng.gen_range(0..cfg.fillers);
                    source.push(format!("f{i}"));
                    target.push(format!("F{i}"));
                }
            }
            Pair { source, target }
        })
        .collect();
    Ok(split(pairs, cfg.held_out, dictionary))
}

const SENSES: [&str; 2] = ["x", "y"];

pub fn disambiguation_task(cfg: &DisambiguationTaskConfig) -> Result<SyntheticCorpus> {
    check_sizes(cfg.pairs, cfg.held_out, cfg.min_len, cfg.max_len)?;
    if cfg.ambiguous == 0 || cfg.fillers == 0 || !(0.0..=1.0).contains(&cfg.unmatched_rate) {
        return Err(Error::InvalidConfig("ambiguous and fillers must be positive, unmatched_rate in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entries = (0..cfg.ambiguous)
        .map(|i| DictEntry {
            source: alloc::vec![format!("a{i}")],
            candidates: SENSES.iter().map(|s| alloc::vec![format!("A{i}{s}")]).collect(),
        })
        .collect();
    let dictionary = Dictionary::from_entries(entries)?;
    let pairs = (0..cfg.pairs)
        .map(|_| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let sense = rng.gen_range(0..SENSES.len());
            let ambiguous = if rng.gen_bool(cfg.unmatched_rate) { 0 } else { rng.gen_range(1..=2) };
            // slot 0 is the marker, the next ones ambiguous words, the rest fillers
            let mut slots: Vec<usize> = (0..len).collect();
            slots.shuffle(&mut rng);
            let mut source: Vec<String> = Vec::with_capacity(len);
            let mut target: Vec<String> = Vec::with_capacity(len);
            for &slot in &slots {
                if slot == 0 {
                    source.push(format!("m{}", SENSES[sense]));
                    target.push(format!("M{}", SENSES[sense]));
                } else if slot <= ambiguous {
                    let i = rng.gen_range(0..cfg.ambiguous);
                    source.push(format!("a{i}"));
                    target.push(format!("A{i}{}", SENSES[sense]));
                } else {
                    let i = rng.gen_range(0..cfg.fillers);
                    source.push(format!("f{i}"));
                    target.push(format!("F{i}"));
                }
            }
            Pair { source, target }
        })
        .collect();
    Ok(split(pairs, cfg.held_out, dictionary))
}

/// Reference translation with each dictionary word rendered by its first
/// candidate, as a system that ignores context would produce.
pub fn first_candidate_output(pair: &Pair, dictionary: &Dictionary) -> Vec<String> {
    pair.source
        .iter()
        .zip(&pair.target)
        .map(|(s, t)| {
            dictionary
                .entries()
                .iter()
                .find(|e| e.source.len() == 1 && &e.source[0] == s)
                .map(|e| e.candidates[0][0].clone())
                .unwrap_or_else(|| t.clone())
        })
        .collect()
}
