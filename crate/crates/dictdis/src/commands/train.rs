use std::path::Path;
use std::time::Instant;

use dictdis_core::data::Vocabulary;
use dictdis_core::model::{ModelConfig, Parameters};
use dictdis_core::training::{train_step, BatchSchedule, TrainConfig, TrainState, TrainingSet};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{require, RunConfig};
use crate::error::{CliError, Result};
use crate::files::{self, load_vocab, read_lines, read_prepared, write_lines};

pub const LOG_FILE: &str = "train_log.jsonl";

/// One line of the training log, written at every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: u64,
    pub lr: f64,
    pub smoothed_loss: f64,
    /// Raw batch loss of every update since the previous entry.
    pub losses: Vec<f64>,
    pub checkpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_secs: Option<f64>,
}

/// Fields that may change between a run and its resumption.
fn resumable_view(t: &TrainConfig) -> TrainConfig {
    TrainConfig { max_updates: 0, checkpoint_every: 0, ..*t }
}

fn check_compatible(ck: &Checkpoint, model: &ModelConfig, train: &TrainConfig, vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mismatch = |what: &str| {
        CliError::Mismatch(format!("{}: {what} differs from the current run", path.display()))
    };
    if ck.vocab.tokens() != vocab.tokens() {
        return Err(mismatch("vocabulary fingerprint"));
    }
    if &ck.manifest.model != model {
        return Err(mismatch("model configuration"));
    }
    match &ck.manifest.train {
        Some(t) if resumable_view(t) == resumable_view(train) => Ok(()),
        _ => Err(mismatch("training configuration")),
    }
}

/// Log lines up to and including `step`, so a resumed run rewrites the
/// same file an uninterrupted one would.
fn log_prefix(path: &Path, step: u64) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut kept = Vec::new();
    for (n, line) in read_lines(path)?.into_iter().enumerate() {
        let e: TrainLogEntry =
            serde_json::from_str(&line).map_err(|e| CliError::parse(path, Some(n + 1), e.to_string()))?;
        if e.step <= step {
            kept.push(line);
        }
    }
    Ok(kept)
}

/// Trains to `train.max_updates`, returning the final state.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<TrainState<f32>> {
    let data = require(&cfg.paths.data, "data")?;
    let out = require(&cfg.paths.out, "out")?;
    let vocab = load_vocab(&data.join(files::VOCAB_FILE))?;
    let examples = read_prepared(&data.join(files::DATA_FILE), vocab.len())?;
    let model = ModelConfig { vocab_size: vocab.len(), ..cfg.model };
    model.validate()?;
    let tc = cfg.train;
    tc.validate()?;

    let set = TrainingSet::build(&examples, &model.augment_config(), model.max_tgt_len)?;
    let mut schedule = BatchSchedule::new(&set, tc.batch_tokens, tc.seed)?;

    let mut state = if resume {
        let path = match &cfg.paths.ckpt {
            Some(p) => p.clone(),
            None => checkpoint::latest(out)?
                .ok_or_else(|| CliError::Config(format!("no checkpoint to resume in {}", out.display())))?,
        };
        let ck = checkpoint::load(&path)?;
        check_compatible(&ck, &model, &tc, &vocab, &path)?;
        ck.state.ok_or_else(|| CliError::parse(&path, None, "checkpoint has no optimizer state"))?
    } else {
        if checkpoint::latest(out)?.is_some() {
            return Err(CliError::Config(format!(
                "{} already holds checkpoints; pass --resume or choose another --out",
                out.display()
            )));
        }
        TrainState::new(Parameters::init(model)?)?
    };

    let log_path = out.join(LOG_FILE);
    let mut log = log_prefix(&log_path, state.step)?;
    let started = Instant::now();
    let mut losses = Vec::new();
    while state.step < tc.max_updates {
        let (_, indices) = schedule.batch_for_step(state.step);
        let batch = set.batch(&indices)?;
        let report = train_step(&batch, &mut state, &tc)?;
        losses.push(report.loss);
        if report.step % tc.checkpoint_every == 0 || report.step == tc.max_updates {
            let name = checkpoint::file_name(report.step);
            checkpoint::save(&out.join(&name), &state, &vocab, Some(&tc))?;
            let entry = TrainLogEntry {
                step: report.step,
                lr: report.lr,
                smoothed_loss: report.smoothed_loss,
                losses: std::mem::take(&mut losses),
                checkpoint: name,
                elapsed_secs: (!cfg.deterministic).then(|| started.elapsed().as_secs_f64()),
            };
            log.push(serde_json::to_string(&entry).expect("serializable log entry"));
            write_lines(&log_path, &log)?;
            eprintln!("step {} lr {:.3e} loss {:.4}", entry.step, entry.lr, entry.smoothed_loss);
        }
    }
    Ok(state)
}
