use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::Range;

use super::dictionary::EncodedDictionary;
use super::vocab::TokenId;

/// A dictionary phrase found in a source sentence, with its candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintMatch {
    /// Half-open token span in the source.
    pub span: Range<usize>,
    pub candidates: Vec<Vec<TokenId>>,
}

impl ConstraintMatch {
    /// Polysemy degree: the number of candidates.
    pub fn degree(&self) -> usize {
        self.candidates.len()
    }
}

/// Greedy left-to-right longest-match phrase finder.
#[derive(Debug, Clone)]
pub struct PhraseMatcher<T: Ord> {
    phrases: BTreeMap<Vec<T>, usize>,
    max_len: usize,
}

impl<T: Ord + Clone> PhraseMatcher<T> {
    /// `phrases` yields `(phrase, payload index)`; empty phrases are ignored
    /// and the first occurrence of a phrase wins.
    pub fn new<I: IntoIterator<Item = (Vec<T>, usize)>>(phrases: I) -> Self {
        let mut map = BTreeMap::new();
        let mut max_len = 0;
        for (p, idx) in phrases {
            if p.is_empty() || map.contains_key(&p) {
                continue;
            }
            max_len = max_len.max(p.len());
            map.insert(p, idx);
        }
        PhraseMatcher { phrases: map, max_len }
    }

    /// Non-overlapping matches as `(span, payload index)`, sorted by start.
    pub fn find(&self, tokens: &[T]) -> Vec<(Range<usize>, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < tokens.len() {
            let longest = self.max_len.min(tokens.len() - pos);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.phrases.get(&tokens[pos..pos + len]).map(|&i| (len, i)));
            match hit {
                Some((len, idx)) => {
                    out.push((pos..pos + len, idx));
                    pos += len;
                }
                None => pos += 1,
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

impl PhraseMatcher<TokenId> {
    pub fn from_dictionary(dict: &EncodedDictionary) -> Self {
        Self::new(dict.entries.iter().enumerate().map(|(i, (src, _))| (src.clone(), i)))
    }
}

/// Matches dictionary phrases in `source`, keeping the leftmost
/// `max_constraints` matches.
pub fn match_constraints(
    source: &[TokenId],
    dictionary: &EncodedDictionary,
    max_constraints: usize,
) -> Vec<ConstraintMatch> {
    PhraseMatcher::from_dictionary(dictionary).find_constraints(source, dictionary, max_constraints)
}

impl PhraseMatcher<TokenId> {
    /// Same as [`match_constraints`] with a prebuilt matcher.
    pub fn find_constraints(
        &self,
        source: &[TokenId],
        dictionary: &EncodedDictionary,
        max_constraints: usize,
    ) -> Vec<ConstraintMatch> {
        self.find(source)
            .into_iter()
            .take(max_constraints)
            .map(|(span, i)| ConstraintMatch { span, candidates: dictionary.entries[i].1.clone() })
            .collect()
    }
}
