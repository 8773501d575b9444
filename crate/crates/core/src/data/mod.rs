//! Tokens, vocabulary, dictionaries, constraint matching, and the
//! augmented encoder input that carries constraint candidates.

mod augment;
mod batch;
mod corpus;
mod dictionary;
mod matching;
mod stats;
mod vocab;

pub use augment::{AugmentConfig, AugmentedInput, CandIndex, ConstraintBlock, ParsedInput, Region};
pub use batch::{pad_batch, Batch};
pub use corpus::{build_vocabulary, encode_examples, Pair};
pub use dictionary::{DictEntry, Dictionary, EncodedDictionary};
pub use matching::{match_constraints, ConstraintMatch, PhraseMatcher};
pub use stats::{dictionary_stats, DictionaryStats};
pub use vocab::{detokenize, tokenize, TokenId, Vocabulary, BOS, EOS, ISEP, PAD, SEP, SPECIAL_TOKENS, UNK};

use alloc::vec::Vec;

/// One training or evaluation triplet: source ids, target ids, and the
/// dictionary constraints matched on the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub constraints: Vec<ConstraintMatch>,
}
