use dictdis_core::data::{detokenize, tokenize, AugmentedInput, EncodedDictionary, PhraseMatcher, TokenId};
use dictdis_core::decoding::{beam_decode, greedy_search, BeamHypothesis, DecodeConfig};
use dictdis_core::model::Parameters;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::with_pool;
use crate::checkpoint::{self, Checkpoint};
use crate::config::{require, RunConfig};
use crate::error::{CliError, Result};
use crate::files::{load_dictionary, read_lines, write_atomic};

/// One translated line, as written in JSONL mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub hypothesis: String,
    pub score: f64,
    pub log_prob: f64,
    pub finished: bool,
    pub constraints: usize,
    /// Gate value at every emitted step.
    pub gates: Vec<f64>,
}

fn decode_one(aug: &AugmentedInput, params: &Parameters<f32>, dc: &DecodeConfig) -> dictdis_core::Result<BeamHypothesis> {
    if dc.beam_size == 1 {
        return greedy_search(aug, params, dc);
    }
    let beam = beam_decode(aug, params, dc)?;
    Ok(beam.into_iter().next().expect("beam is never empty"))
}

/// Model input for one tokenized source line; `matcher = None` gives an
/// input without any appended constraint block.
pub fn source_input(
    tokens: &[String],
    ck: &Checkpoint,
    matcher: Option<(&EncodedDictionary, &PhraseMatcher<TokenId>)>,
    max_constraints: usize,
) -> dictdis_core::Result<AugmentedInput> {
    let source = ck.vocab.encode(tokens);
    let matches = match matcher {
        Some((d, m)) => m.find_constraints(&source, d, max_constraints),
        None => Vec::new(),
    };
    AugmentedInput::build(&source, &matches, &ck.params.config().augment_config())
}

/// Translates raw source lines. `dictionary = None` gives unconstrained
/// inputs. Errors carry the 1-based line number.
pub fn translate_lines(
    lines: &[String],
    ck: &Checkpoint,
    dictionary: Option<&EncodedDictionary>,
    max_constraints: usize,
    dc: &DecodeConfig,
) -> std::result::Result<Vec<Translation>, (usize, dictdis_core::Error)> {
    dc.validate().map_err(|e| (0, e))?;
    let matcher = dictionary.map(|d| (d, PhraseMatcher::from_dictionary(d)));
    lines
        .par_iter()
        .enumerate()
        .map(|(n, line)| {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                return Ok(Translation {
                    hypothesis: String::new(),
                    score: 0.0,
                    log_prob: 0.0,
                    finished: true,
                    constraints: 0,
                    gates: Vec::new(),
                });
            }
            let aug = source_input(&tokens, ck, matcher.as_ref().map(|(d, m)| (*d, m)), max_constraints)
                .map_err(|e| (n + 1, e))?;
            let hyp = decode_one(&aug, &ck.params, dc).map_err(|e| (n + 1, e))?;
            Ok(Translation {
                hypothesis: detokenize(&ck.vocab.decode(hyp.output())),
                score: hyp.score(dc.length_penalty),
                log_prob: hyp.log_prob,
                finished: hyp.finished,
                constraints: aug.num_constraints(),
                gates: hyp.gates,
            })
        })
        .collect()
}

pub fn translate(cfg: &RunConfig, jsonl: bool) -> Result<()> {
    let ck_path = require(&cfg.paths.ckpt, "ckpt")?;
    let src_path = require(&cfg.paths.src, "src")?;
    let ck = checkpoint::load(ck_path)?;
    let dictionary = if cfg.unconstrained {
        None
    } else {
        let path = cfg.paths.dict.as_deref().ok_or_else(|| {
            CliError::Config("constrained translation needs --dict (or pass --unconstrained)".into())
        })?;
        Some(load_dictionary(path)?.encode(&ck.vocab))
    };
    let lines = read_lines(src_path)?;
    let out = with_pool(cfg, || {
        translate_lines(&lines, &ck, dictionary.as_ref(), cfg.data.max_constraints, &cfg.decode)
    })?
    .map_err(|(line, e)| match line {
        0 => CliError::Model(e),
        l => CliError::parse(src_path, Some(l), e.to_string()),
    })?;
    let mut text = String::new();
    for t in &out {
        if jsonl {
            text.push_str(&serde_json::to_string(t).expect("serializable translation"));
        } else {
            text.push_str(&t.hypothesis);
        }
        text.push('\n');
    }
    match &cfg.paths.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
