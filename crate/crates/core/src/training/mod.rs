//! Label-smoothed maximum-likelihood training with Adam and warmup.

mod gradcheck;
mod plan;
mod state;

pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, GroupCheck};
pub use plan::{epoch_plan, BatchSchedule, TrainingSet};
pub use state::{batch_fingerprint, batch_loss, train_step, StepReport, TrainState};

use serde::{Deserialize, Serialize};

use crate::data::TokenId;
use crate::tensor::Scalar;
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_peak: f64,
    pub warmup_steps: u64,
    pub label_smoothing: f64,
    /// Cap on `examples x (source + target)` padded positions per batch.
    pub batch_tokens: usize,
    pub max_updates: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_peak: 5e-4,
            warmup_steps: 400,
            label_smoothing: 0.1,
            batch_tokens: 2048,
            max_updates: 5000,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            clip_norm: 1.0,
            seed: 1,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        if !(self.lr_peak > 0.0) {
            return bad("lr_peak must be positive");
        }
        if self.warmup_steps == 0 {
            return bad("warmup_steps must be at least 1");
        }
        if self.batch_tokens == 0 {
            return bad("batch_tokens must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("adam_eps and clip_norm must be positive");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1");
        }
        Ok(())
    }
}

/// Linear warmup to `lr_peak`, then inverse square-root decay.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    let step = step.max(1) as f64;
    let warm = cfg.warmup_steps as f64;
    cfg.lr_peak * (step / warm).min(libm::sqrt(warm / step))
}

/// Mean smoothed cross-entropy over the steps whose target is not `pad_id`.
pub fn label_smoothed_nll<S: Scalar>(
    dists: &[alloc::vec::Vec<S>],
    targets: &[TokenId],
    smoothing: f64,
    pad_id: TokenId,
) -> Result<f64> {
    if dists.len() != targets.len() {
        return Err(Error::LengthMismatch { expected: targets.len(), found: dists.len() });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, &gold) in dists.iter().zip(targets) {
        if gold == pad_id {
            continue;
        }
        let v = p.len();
        let gold = gold as usize;
        if gold >= v {
            return Err(Error::IdOutOfRange { table: "target vocabulary", id: gold, size: v });
        }
        let off = if v > 1 { smoothing / (v - 1) as f64 } else { 0.0 };
        for (i, &x) in p.iter().enumerate() {
            let q = if i == gold { 1.0 - smoothing } else { off };
            if q != 0.0 {
                total -= q * libm::log(x.as_f64().max(LOG_FLOOR));
            }
        }
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
