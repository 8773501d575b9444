use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Clone, Parser)]
#[command(name = "dictdis", version, about = "Dictionary-constrained neural machine translation")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dictionary TSV (`source<TAB>cand1|cand2|...`).
    #[arg(long, global = true)]
    pub dict: Option<PathBuf>,
    /// Source-side text, one sentence per line.
    #[arg(long, global = true)]
    pub src: Option<PathBuf>,
    /// Target-side text, one sentence per line.
    #[arg(long, global = true)]
    pub tgt: Option<PathBuf>,
    /// Prepared data directory.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    /// Translate without dictionary constraints.
    #[arg(long, global = true)]
    pub unconstrained: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Byte-reproducible outputs (no timing fields).
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Copy,
    Disambiguation,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Match the dictionary on a parallel corpus and write prepared data.
    Prepare,
    /// Train from prepared data, checkpointing into --out.
    Train {
        /// Continue from --ckpt, or from the latest checkpoint in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Translate --src into --out (stdout when omitted).
    Translate {
        /// Emit one JSON object per line with score and gate trace.
        #[arg(long)]
        jsonl: bool,
    },
    /// Score hypotheses against references; two --hyp files add a bootstrap test.
    Evaluate {
        #[arg(long = "hyp", required = true)]
        hyps: Vec<PathBuf>,
        /// Reference translations (defaults to --tgt).
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
    /// Polysemy histogram of --dict and its coverage of --src.
    Stats,
    /// Generate a synthetic corpus and dictionary into --out.
    MakeSynthetic {
        #[arg(long, value_enum)]
        task: Task,
    },
}

impl CommonArgs {
    /// Config file (or defaults) with flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let paths = &mut cfg.paths;
        for (slot, flag) in [
            (&mut paths.dict, &self.dict),
            (&mut paths.src, &self.src),
            (&mut paths.tgt, &self.tgt),
            (&mut paths.data, &self.data),
            (&mut paths.ckpt, &self.ckpt),
            (&mut paths.out, &self.out),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if let Some(a) = self.alpha {
            cfg.decode.alpha = a;
        }
        if let Some(b) = self.beam {
            cfg.decode.beam_size = b;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.unconstrained |= self.unconstrained;
        cfg.deterministic |= self.deterministic;
        cfg.apply_seed();
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    crate::commands::dispatch(&cli.command, &cfg)
}
