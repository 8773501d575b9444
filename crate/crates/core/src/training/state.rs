use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lr_schedule, TrainConfig};
use crate::data::Batch;
use crate::model::{forward_batch, Parameters};
use crate::tensor::{Matrix, Scalar};
use crate::{Error, Result};

const LOSS_DECAY: f64 = 0.98;

/// Everything needed to continue training bit-for-bit. Dropout masks for
/// update `k` come from a ChaCha stream keyed by `(seed, k)`, so no RNG
/// position has to be stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<S> {
    pub step: u64,
    pub params: Parameters<S>,
    pub m: Parameters<S>,
    pub v: Parameters<S>,
    /// Exponential moving average of the batch loss.
    pub smoothed_loss: Option<f64>,
}

impl<S: Scalar> TrainState<S> {
    pub fn new(params: Parameters<S>) -> Result<Self> {
        let m = Parameters::zeros(*params.config())?;
        let v = m.clone();
        Ok(TrainState { step: 0, params, m, v, smoothed_loss: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Updates completed, including this one.
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub smoothed_loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub target_tokens: usize,
}

/// FNV-1a over the batch's encoder and decoder ids.
pub fn batch_fingerprint(batch: &Batch) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let ids = batch.inputs.iter().flat_map(|a| a.token_ids.iter()).chain(&batch.dec_target);
    for &id in ids {
        for b in id.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn loss_targets(batch: &Batch) -> Vec<Option<usize>> {
    batch.dec_target.iter().zip(&batch.tgt_mask).map(|(&t, &m)| m.then_some(t as usize)).collect()
}

/// Training-objective loss of a batch in evaluation mode.
pub fn batch_loss<S: Scalar>(params: &Parameters<S>, batch: &Batch, smoothing: f64) -> Result<f64> {
    let mut fwd = forward_batch(params, batch, false, None)?;
    let loss = fwd.graph.smoothed_nll(fwd.p_final, loss_targets(batch), S::of(smoothing));
    Ok(fwd.graph.value(loss).get(0, 0).as_f64())
}

/// Loss and per-tensor gradients (zeros for tensors off the loss path).
pub(crate) fn loss_and_grads<S: Scalar>(
    params: &Parameters<S>,
    batch: &Batch,
    smoothing: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Matrix<S>>)> {
    let mut fwd = forward_batch(params, batch, true, rng)?;
    let loss = fwd.graph.smoothed_nll(fwd.p_final, loss_targets(batch), S::of(smoothing));
    let value = fwd.graph.value(loss).get(0, 0).as_f64();
    let mut grads = fwd.graph.backward(loss);
    let out = fwd
        .param_vars
        .iter()
        .zip(params.tensors())
        .map(|(var, t)| var.and_then(|v| grads.take(v)).unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols())))
        .collect();
    Ok((value, out))
}

/// Forward, backward, global-norm clipping, and one bias-corrected Adam
/// update at the scheduled learning rate.
pub fn train_step<S: Scalar>(batch: &Batch, state: &mut TrainState<S>, cfg: &TrainConfig) -> Result<StepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(state.step);
    let (loss, mut grads) = loss_and_grads(&state.params, batch, cfg.label_smoothing, Some(&mut rng))?;
    let norm = libm::sqrt(grads.iter().flat_map(|g| g.data()).map(|x| x.as_f64() * x.as_f64()).sum::<f64>());
    if !loss.is_finite() || !norm.is_finite() {
        return Err(Error::NonFiniteLoss { step: state.step, batch_fingerprint: batch_fingerprint(batch) });
    }
    if norm > cfg.clip_norm {
        let scale = S::of(cfg.clip_norm / norm);
        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= scale));
    }

    let t = state.step + 1;
    let lr = lr_schedule(t, cfg);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let corr1 = 1.0 - libm::pow(b1, t as f64);
    let corr2 = 1.0 - libm::pow(b2, t as f64);
    let (b1s, b2s) = (S::of(b1), S::of(b2));
    let (one_b1, one_b2) = (S::of(1.0 - b1), S::of(1.0 - b2));
    let step_size = S::of(lr / corr1);
    let inv_corr2 = S::of(1.0 / corr2);
    let eps = S::of(cfg.adam_eps);
    for (k, g) in grads.iter().enumerate() {
        let m = state.m.tensor_mut(k).data_mut();
        let v = state.v.tensor_mut(k).data_mut();
        let p = state.params.tensor_mut(k).data_mut();
        for i in 0..g.data().len() {
            let gi = g.data()[i];
            m[i] = b1s * m[i] + one_b1 * gi;
            v[i] = b2s * v[i] + one_b2 * gi * gi;
            p[i] -= step_size * m[i] / ((v[i] * inv_corr2).sqrt() + eps);
        }
    }
    state.step = t;
    let smoothed = match state.smoothed_loss {
        None => loss,
        Some(prev) => LOSS_DECAY * prev + (1.0 - LOSS_DECAY) * loss,
    };
    state.smoothed_loss = Some(smoothed);
    Ok(StepReport { step: t, lr, loss, smoothed_loss: smoothed, grad_norm: norm, target_tokens: batch.target_tokens() })
}
