//! Plain-text and JSONL formats shared by the subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;

use dictdis_core::data::{tokenize, ConstraintMatch, Dictionary, Example, TokenId, Vocabulary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const DATA_FILE: &str = "data.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STATS_FILE: &str = "stats.json";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_string).collect())
}

pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?.iter().map(|l| tokenize(l)).collect())
}

/// Writes through a sibling temp file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    Dictionary::parse(&read_text(path)?).map_err(|e| match e {
        dictdis_core::Error::MalformedLine { line }
        | dictdis_core::Error::EmptyPhrase { line }
        | dictdis_core::Error::DuplicatePhrase { line, .. } => CliError::parse(path, Some(line), e.to_string()),
        other => CliError::parse(path, None, other.to_string()),
    })
}

/// One token per line, id order.
pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write_lines(path, vocab.tokens())
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::from_tokens(read_lines(path)?).map_err(|e| CliError::parse(path, None, e.to_string()))
}

/// SHA-256 of the id-ordered token list, newline-joined.
pub fn vocab_fingerprint(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for t in vocab.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    /// Half-open source token span `[start, end)`.
    pub span: [usize; 2],
    pub candidates: Vec<Vec<TokenId>>,
}

/// One line of prepared data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedRecord {
    pub src_ids: Vec<TokenId>,
    pub tgt_ids: Vec<TokenId>,
    pub constraints: Vec<ConstraintRecord>,
}

impl From<&Example> for PreparedRecord {
    fn from(e: &Example) -> Self {
        PreparedRecord {
            src_ids: e.source.clone(),
            tgt_ids: e.target.clone(),
            constraints: e
                .constraints
                .iter()
                .map(|c| ConstraintRecord { span: [c.span.start, c.span.end], candidates: c.candidates.clone() })
                .collect(),
        }
    }
}

impl From<PreparedRecord> for Example {
    fn from(r: PreparedRecord) -> Self {
        Example {
            source: r.src_ids,
            target: r.tgt_ids,
            constraints: r
                .constraints
                .into_iter()
                .map(|c| ConstraintMatch { span: c.span[0]..c.span[1], candidates: c.candidates })
                .collect(),
        }
    }
}

pub fn write_prepared(path: &Path, examples: &[Example]) -> Result<()> {
    let lines: Vec<String> = examples
        .iter()
        .map(|e| serde_json::to_string(&PreparedRecord::from(e)).expect("serializable record"))
        .collect();
    write_lines(path, &lines)
}

/// Reads prepared records, checking ids against `vocab_size`.
pub fn read_prepared(path: &Path, vocab_size: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PreparedRecord =
            serde_json::from_str(line).map_err(|e| CliError::parse(path, Some(n + 1), e.to_string()))?;
        let bad_id = rec
            .src_ids
            .iter()
            .chain(&rec.tgt_ids)
            .chain(rec.constraints.iter().flat_map(|c| c.candidates.iter().flatten()))
            .any(|&id| id as usize >= vocab_size);
        let bad_span = rec.constraints.iter().any(|c| c.span[0] >= c.span[1] || c.span[1] > rec.src_ids.len());
        if bad_id || bad_span || rec.constraints.iter().any(|c| c.candidates.is_empty()) {
            return Err(CliError::parse(path, Some(n + 1), "token id or constraint span out of range"));
        }
        out.push(rec.into());
    }
    Ok(out)
}
