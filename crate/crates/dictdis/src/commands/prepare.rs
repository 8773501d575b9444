use std::collections::BTreeMap;

use dictdis_core::data::{build_vocabulary, dictionary_stats, encode_examples, DictionaryStats, Pair};
use serde::{Deserialize, Serialize};

use crate::config::{require, RunConfig};
use crate::error::{CliError, Result};
use crate::files::{self, load_dictionary, read_tokenized, save_vocab, write_json, write_prepared};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub records: usize,
    pub constrained_records: usize,
    pub constraints: usize,
    /// degree -> number of matched constraints.
    pub constraints_by_degree: BTreeMap<usize, usize>,
    pub vocab_size: usize,
    pub dictionary: DictionaryStats,
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareStats> {
    let src_path = require(&cfg.paths.src, "src")?;
    let tgt_path = require(&cfg.paths.tgt, "tgt")?;
    let dict_path = require(&cfg.paths.dict, "dict")?;
    let out = require(&cfg.paths.out, "out")?;
    if cfg.data.min_freq == 0 {
        return Err(CliError::Config("data.min_freq must be at least 1".into()));
    }

    let sources = read_tokenized(src_path)?;
    let targets = read_tokenized(tgt_path)?;
    if sources.len() != targets.len() {
        return Err(CliError::Mismatch(format!(
            "{} has {} lines but {} has {}",
            src_path.display(),
            sources.len(),
            tgt_path.display(),
            targets.len()
        )));
    }
    if let Some(n) = sources.iter().position(Vec::is_empty) {
        return Err(CliError::parse(src_path, Some(n + 1), "empty source sentence"));
    }
    let dictionary = load_dictionary(dict_path)?;
    let pairs: Vec<Pair> = sources.into_iter().zip(targets).map(|(source, target)| Pair { source, target }).collect();

    let vocab = build_vocabulary(&pairs, &dictionary, cfg.data.min_freq)?;
    let encoded = dictionary.encode(&vocab);
    let examples = encode_examples(&pairs, &vocab, &encoded, cfg.data.max_constraints);

    let mut by_degree = BTreeMap::new();
    for c in examples.iter().flat_map(|e| &e.constraints) {
        *by_degree.entry(c.degree()).or_insert(0) += 1;
    }
    let stats = PrepareStats {
        records: examples.len(),
        constrained_records: examples.iter().filter(|e| !e.constraints.is_empty()).count(),
        constraints: by_degree.values().sum(),
        constraints_by_degree: by_degree,
        vocab_size: vocab.len(),
        dictionary: dictionary_stats(&dictionary, pairs.iter().map(|p| &p.source)),
    };

    write_prepared(&out.join(files::DATA_FILE), &examples)?;
    save_vocab(&out.join(files::VOCAB_FILE), &vocab)?;
    write_json(&out.join(files::STATS_FILE), &stats)?;
    Ok(stats)
}
