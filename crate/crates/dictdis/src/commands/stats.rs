use dictdis_core::data::{detokenize, dictionary_stats, Dictionary, DictionaryStats, Pair};
use dictdis_core::synthetic::{
    copy_task, disambiguation_task, first_candidate_output, CopyTaskConfig, DisambiguationTaskConfig,
};

use crate::cli::Task;
use crate::config::{require, RunConfig};
use crate::error::Result;
use crate::files::{load_dictionary, read_tokenized, write_json, write_lines};

/// Dictionary statistics; coverage is measured on `--src` when given.
pub fn stats(cfg: &RunConfig) -> Result<DictionaryStats> {
    let dictionary = load_dictionary(require(&cfg.paths.dict, "dict")?)?;
    let corpus = match &cfg.paths.src {
        Some(p) => read_tokenized(p)?,
        None => Vec::new(),
    };
    let stats = dictionary_stats(&dictionary, &corpus);
    match &cfg.paths.out {
        Some(p) => write_json(p, &stats)?,
        None => println!("{}", serde_json::to_string_pretty(&stats).expect("serializable stats")),
    }
    Ok(stats)
}

fn dictionary_tsv(d: &Dictionary) -> Vec<String> {
    d.entries()
        .iter()
        .map(|e| {
            let cands: Vec<String> = e.candidates.iter().map(|c| detokenize(c)).collect();
            format!("{}\t{}", detokenize(&e.source), cands.join("|"))
        })
        .collect()
}

fn side(pairs: &[Pair], f: impl Fn(&Pair) -> &[String]) -> Vec<String> {
    pairs.iter().map(|p| detokenize(f(p))).collect()
}

/// Writes `dict.tsv`, `{train,test}.{src,tgt}` and `test.first` (the
/// always-first-candidate baseline output) into `--out`.
pub fn make_synthetic(cfg: &RunConfig, task: Task) -> Result<()> {
    let out = require(&cfg.paths.out, "out")?;
    let seed = cfg.seed.unwrap_or(1);
    let corpus = match task {
        Task::Copy => copy_task(&CopyTaskConfig { seed, ..Default::default() })?,
        Task::Disambiguation => disambiguation_task(&DisambiguationTaskConfig { seed, ..Default::default() })?,
    };
    write_lines(&out.join("dict.tsv"), &dictionary_tsv(&corpus.dictionary))?;
    for (name, pairs) in [("train", &corpus.train), ("test", &corpus.test)] {
        write_lines(&out.join(format!("{name}.src")), &side(pairs, |p| &p.source))?;
        write_lines(&out.join(format!("{name}.tgt")), &side(pairs, |p| &p.target))?;
    }
    let first: Vec<String> =
        corpus.test.iter().map(|p| detokenize(&first_candidate_output(p, &corpus.dictionary))).collect();
    write_lines(&out.join("test.first"), &first)
}
