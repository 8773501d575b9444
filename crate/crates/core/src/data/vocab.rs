use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const SEP: TokenId = 4;
pub const ISEP: TokenId = 5;

pub const SPECIAL_TOKENS: [&str; 6] = ["<pad>", "<unk>", "<bos>", "<eos>", "<sep>", "<isep>"];

const ESCAPE: char = '\\';

/// Whitespace tokenization. Tokens that collide with a reserved symbol (or
/// already start with the escape character) are escaped with a leading
/// backslash so reserved surfaces never appear in tokenized text.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|t| {
            if SPECIAL_TOKENS.contains(&t) || t.starts_with(ESCAPE) {
                let mut s = String::with_capacity(t.len() + 1);
                s.push(ESCAPE);
                s.push_str(t);
                s
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Inverse of [`tokenize`] up to whitespace normalization.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let t = t.as_ref();
        out.push_str(t.strip_prefix(ESCAPE).unwrap_or(t));
    }
    out
}

/// Bijective token/id mapping with the six reserved symbols at ids 0..6.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

impl Vocabulary {
    /// Counts tokens over `corpus` and keeps those seen at least `min_freq`
    /// times, ordered by frequency (descending) then lexicographically.
    pub fn build<I, L, T>(corpus: I, min_freq: usize) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if min_freq == 0 {
            return Err(Error::InvalidConfig("min_freq must be at least 1".into()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut sentences = 0usize;
        for line in corpus {
            sentences += 1;
            for tok in line {
                let tok = tok.as_ref();
                if SPECIAL_TOKENS.contains(&tok) {
                    continue;
                }
                match counts.get_mut(tok) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(tok.to_string(), 1);
                    }
                }
            }
        }
        if sentences == 0 {
            return Err(Error::EmptyCorpus);
        }
        // BTreeMap iteration is lexicographic; a stable sort keeps that for ties.
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1));
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens.iter().zip(SPECIAL_TOKENS).any(|(t, s)| t != s)
        {
            return Err(Error::InvalidVocabulary("reserved symbols must occupy ids 0..6".into()));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidVocabulary(alloc::format!("duplicate token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Maps tokens to ids, unknown tokens to `<unk>`.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK as usize])).collect()
    }
}
