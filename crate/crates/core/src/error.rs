use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vocabulary was requested from a corpus with no sentences.
    EmptyCorpus,
    /// A vocabulary listing is missing the reserved symbols or repeats a token.
    InvalidVocabulary(String),
    /// Dictionary line without a tab separating source and candidates.
    MalformedLine { line: usize },
    /// Dictionary line with an empty source phrase or candidate.
    EmptyPhrase { line: usize },
    /// Source phrase already defined earlier in the dictionary.
    DuplicatePhrase { line: usize, phrase: String },
    /// Source sentence is longer than the position offset or augmented budget.
    SourceTooLong { len: usize, max: usize },
    /// An id indexes past the end of an embedding table.
    IdOutOfRange { table: &'static str, id: usize, size: usize },
    /// Constraint/candidate index not present in the augmented input.
    MissingCandidate { constraint: usize, candidate: usize },
    /// A NaN or infinity showed up during a forward pass.
    NonFinite { stage: &'static str, index: usize },
    /// Training loss became NaN or infinite.
    NonFiniteLoss { step: u64, batch_fingerprint: u64 },
    InvalidConfig(String),
    LengthMismatch { expected: usize, found: usize },
    EmptyInput(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCorpus => write!(f, "corpus is empty"),
            Error::InvalidVocabulary(msg) => write!(f, "invalid vocabulary: {msg}"),
            Error::MalformedLine { line } => {
                write!(f, "line {line}: expected `source<TAB>cand1|cand2|...`")
            }
            Error::EmptyPhrase { line } => write!(f, "line {line}: empty phrase or candidate"),
            Error::DuplicatePhrase { line, phrase } => {
                write!(f, "line {line}: duplicate source phrase `{phrase}`")
            }
            Error::SourceTooLong { len, max } => {
                write!(f, "source length {len} exceeds maximum {max}")
            }
            Error::IdOutOfRange { table, id, size } => {
                write!(f, "id {id} out of range for {table} table of size {size}")
            }
            Error::MissingCandidate { constraint, candidate } => {
                write!(f, "no positions for candidate {candidate} of constraint {constraint}")
            }
            Error::NonFinite { stage, index } => {
                write!(f, "non-finite value in {stage} (index {index})")
            }
            Error::NonFiniteLoss { step, batch_fingerprint } => {
                write!(f, "non-finite loss at step {step} (batch {batch_fingerprint:016x})")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
        }
    }
}

impl core::error::Error for Error {}
