use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::vocab::{tokenize, TokenId, Vocabulary, UNK};
use crate::{Error, Result};

/// A source phrase with its ordered candidate translations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictEntry {
    pub source: Vec<String>,
    pub candidates: Vec<Vec<String>>,
}

impl DictEntry {
    /// Number of candidate translations.
    pub fn degree(&self) -> usize {
        self.candidates.len()
    }
}

/// Ordered source-phrase to candidates mapping. Candidate order is file
/// order and defines the candidate index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: Vec<DictEntry>,
}

impl Dictionary {
    /// Parses the tab-separated dictionary format:
    /// `source phrase<TAB>cand1|cand2|...`, `#` comment lines, blank
    /// lines ignored. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (src, cands) = line.split_once('\t').ok_or(Error::MalformedLine { line: line_no })?;
            let source = tokenize(src);
            if source.is_empty() {
                return Err(Error::EmptyPhrase { line: line_no });
            }
            let candidates = cands
                .split('|')
                .map(|c| {
                    let toks = tokenize(c);
                    if toks.is_empty() {
                        Err(Error::EmptyPhrase { line: line_no })
                    } else {
                        Ok(toks)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if !seen.insert(source.clone()) {
                return Err(Error::DuplicatePhrase { line: line_no, phrase: source.join(" ") });
            }
            entries.push(DictEntry { source, candidates });
        }
        Ok(Dictionary { entries })
    }

    pub fn from_entries(entries: Vec<DictEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.source.is_empty() || e.candidates.is_empty() || e.candidates.iter().any(Vec::is_empty) {
                return Err(Error::EmptyPhrase { line: i + 1 });
            }
            if !seen.insert(&e.source) {
                return Err(Error::DuplicatePhrase { line: i + 1, phrase: e.source.join(" ") });
            }
        }
        Ok(Dictionary { entries })
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Maps every phrase to vocabulary ids. Entries whose source phrase
    /// contains an out-of-vocabulary token are dropped: `<unk>` would
    /// otherwise match unrelated words.
    pub fn encode(&self, vocab: &Vocabulary) -> EncodedDictionary {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            let source = vocab.encode(&e.source);
            if source.contains(&UNK) || !seen.insert(source.clone()) {
                continue;
            }
            let candidates = e.candidates.iter().map(|c| vocab.encode(c)).collect();
            entries.push((source, candidates));
        }
        EncodedDictionary { entries }
    }
}

/// A dictionary over vocabulary ids, ready for matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodedDictionary {
    pub entries: Vec<(Vec<TokenId>, Vec<Vec<TokenId>>)>,
}
