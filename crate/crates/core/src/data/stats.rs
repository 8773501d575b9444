use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use super::matching::PhraseMatcher;

/// Polysemy histogram of a dictionary and its sentence coverage on a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryStats {
    pub entries: usize,
    /// degree -> percentage of entries with that many candidates.
    pub polysemy_histogram: BTreeMap<usize, f64>,
    pub sentences: usize,
    pub matched_sentences: usize,
    /// Percentage of sentences with at least one dictionary match.
    pub coverage: f64,
}

pub fn dictionary_stats<I, L>(dictionary: &Dictionary, corpus: I) -> DictionaryStats
where
    I: IntoIterator<Item = L>,
    L: AsRef<[String]>,
{
    let entries = dictionary.len();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in dictionary.entries() {
        *counts.entry(e.degree()).or_default() += 1;
    }
    let polysemy_histogram = counts
        .into_iter()
        .map(|(k, c)| (k, 100.0 * c as f64 / entries as f64))
        .collect();
    let matcher: PhraseMatcher<String> =
        PhraseMatcher::new(dictionary.entries().iter().enumerate().map(|(i, e)| (e.source.clone(), i)));
    let (mut sentences, mut matched) = (0, 0);
    for line in corpus {
        sentences += 1;
        if !matcher.is_empty() && !matcher.find(line.as_ref()).is_empty() {
            matched += 1;
        }
    }
    let coverage = if sentences == 0 { 0.0 } else { 100.0 * matched as f64 / sentences as f64 };
    DictionaryStats { entries, polysemy_histogram, sentences, matched_sentences: matched, coverage }
}
