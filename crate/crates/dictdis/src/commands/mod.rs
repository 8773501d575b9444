mod evaluate;
mod prepare;
mod stats;
mod train;
mod translate;

pub use evaluate::{evaluate, evaluation_records};
pub use prepare::{prepare, PrepareStats};
pub use stats::{make_synthetic, stats};
pub use train::{train, TrainLogEntry, LOG_FILE};
pub use translate::{source_input, translate, translate_lines, Translation};

use crate::cli::Command;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Prepare => prepare(cfg).map(|_| ()),
        Command::Train { resume } => train(cfg, *resume).map(|_| ()),
        Command::Translate { jsonl } => translate(cfg, *jsonl),
        Command::Evaluate { hyps, reference } => evaluate(cfg, hyps, reference.as_deref()).map(|_| ()),
        Command::Stats => stats(cfg).map(|_| ()),
        Command::MakeSynthetic { task } => make_synthetic(cfg, *task),
    }
}

/// Runs `f` on a pool sized by `--threads` (rayon's default otherwise).
pub(crate) fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
