use std::path::{Path, PathBuf};

use dictdis_core::data::{tokenize, Vocabulary};
use dictdis_core::evaluation::{paired_bootstrap, EvalRecord, MetricsReport};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files::{load_dictionary, read_lines, write_json};

fn read_aligned(path: &Path, expected: Option<(&Path, usize)>) -> Result<Vec<Vec<String>>> {
    let lines: Vec<Vec<String>> = read_lines(path)?.iter().map(|l| tokenize(l)).collect();
    if let Some((other, n)) = expected {
        if lines.len() != n {
            return Err(CliError::Mismatch(format!(
                "{} has {} lines but {} has {}",
                path.display(),
                lines.len(),
                other.display(),
                n
            )));
        }
    }
    Ok(lines)
}

/// Builds evaluation records for each hypothesis file. Tokens are mapped
/// through a vocabulary over every input, so ids only encode identity.
/// Constraints come from matching `--dict` on `--src` when both are set.
pub fn evaluation_records(cfg: &RunConfig, hyps: &[PathBuf], reference: &Path) -> Result<Vec<Vec<EvalRecord>>> {
    let refs = read_aligned(reference, None)?;
    let n = refs.len();
    let systems =
        hyps.iter().map(|h| read_aligned(h, Some((reference, n)))).collect::<Result<Vec<_>>>()?;
    let constraint_inputs = match (&cfg.paths.dict, &cfg.paths.src) {
        (Some(d), Some(s)) => Some((load_dictionary(d)?, read_aligned(s, Some((reference, n)))?)),
        (Some(_), None) => return Err(CliError::Config("--dict needs --src to locate constraints".into())),
        _ => None,
    };

    let mut corpus: Vec<&[String]> = refs.iter().chain(systems.iter().flatten()).map(Vec::as_slice).collect();
    if let Some((dict, src)) = &constraint_inputs {
        corpus.extend(src.iter().map(Vec::as_slice));
        for e in dict.entries() {
            corpus.push(&e.source);
            corpus.extend(e.candidates.iter().map(Vec::as_slice));
        }
    }
    // an empty reference file still needs a well-formed vocabulary
    corpus.push(&[]);
    let vocab = Vocabulary::build(corpus.iter().map(|s| s.iter()), 1)?;

    let constraints: Vec<_> = match &constraint_inputs {
        Some((dict, src)) => {
            let enc = dict.encode(&vocab);
            let matcher = dictdis_core::data::PhraseMatcher::from_dictionary(&enc);
            src.iter()
                .map(|s| matcher.find_constraints(&vocab.encode(s), &enc, cfg.data.max_constraints))
                .collect()
        }
        None => vec![Vec::new(); n],
    };
    let ref_ids: Vec<_> = refs.iter().map(|r| vocab.encode(r)).collect();
    Ok(systems
        .iter()
        .map(|sys| {
            sys.iter()
                .zip(&ref_ids)
                .zip(&constraints)
                .map(|((h, r), c)| EvalRecord { hypothesis: vocab.encode(h), reference: r.clone(), constraints: c.clone() })
                .collect()
        })
        .collect())
}

/// Metrics of the first hypothesis file; with two files, adds a paired
/// bootstrap of the first (A) against the second (B).
pub fn evaluate(cfg: &RunConfig, hyps: &[PathBuf], reference: Option<&Path>) -> Result<MetricsReport> {
    let reference = reference
        .or(cfg.paths.tgt.as_deref())
        .ok_or_else(|| CliError::Config("missing reference: pass --ref or --tgt".into()))?;
    if hyps.is_empty() || hyps.len() > 2 {
        return Err(CliError::Config(format!("expected one or two --hyp files, got {}", hyps.len())));
    }
    let systems = evaluation_records(cfg, hyps, reference)?;
    let mut report = MetricsReport::compute(&systems[0]);
    if let [a, b] = systems.as_slice() {
        let ha: Vec<_> = a.iter().map(|r| r.hypothesis.as_slice()).collect();
        let hb: Vec<_> = b.iter().map(|r| r.hypothesis.as_slice()).collect();
        let refs: Vec<_> = a.iter().map(|r| r.reference.as_slice()).collect();
        report.bootstrap = Some(paired_bootstrap(&ha, &hb, &refs, &cfg.bootstrap)?);
    }
    match &cfg.paths.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("serializable report")),
    }
    Ok(report)
}
