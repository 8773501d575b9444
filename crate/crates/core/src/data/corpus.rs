use alloc::string::String;
use alloc::vec::Vec;

use super::dictionary::{Dictionary, EncodedDictionary};
use super::matching::PhraseMatcher;
use super::vocab::Vocabulary;
use super::Example;
use crate::Result;

/// A tokenized sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Shared source/target vocabulary over the corpus plus every dictionary
/// phrase, so candidates never encode to `<unk>`.
pub fn build_vocabulary(pairs: &[Pair], dictionary: &Dictionary, min_freq: usize) -> Result<Vocabulary> {
    let sentences = pairs.iter().flat_map(|p| [&p.source, &p.target]);
    let phrases = dictionary.entries().iter().flat_map(|e| core::iter::once(&e.source).chain(&e.candidates));
    // dictionary phrases are always kept, whatever `min_freq` says
    let repeated = phrases.flat_map(|p| core::iter::repeat_n(p, min_freq));
    Vocabulary::build(sentences.chain(repeated).map(|s| s.iter()), min_freq)
}

/// Encodes pairs and attaches dictionary matches found on each source.
pub fn encode_examples(
    pairs: &[Pair],
    vocab: &Vocabulary,
    dictionary: &EncodedDictionary,
    max_constraints: usize,
) -> Vec<Example> {
    let matcher = PhraseMatcher::from_dictionary(dictionary);
    pairs
        .iter()
        .map(|p| {
            let source = vocab.encode(&p.source);
            let constraints = matcher.find_constraints(&source, dictionary, max_constraints);
            Example { source, target: vocab.encode(&p.target), constraints }
        })
        .collect()
}
