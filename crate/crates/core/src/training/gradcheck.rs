use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::{batch_loss, loss_and_grads};
use crate::data::Example;
use crate::model::{augment_example, Parameters};
use crate::data::{pad_batch, PAD};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub smoothing: f64,
    /// Central-difference step.
    pub step: f64,
    /// Coordinates sampled per tensor (all of them when the tensor is smaller).
    pub coords_per_group: usize,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { smoothing: 0.1, step: 1e-4, coords_per_group: 64, abs_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_analytic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupCheck> {
        self.groups.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares backprop gradients of the training loss on `examples` (one
/// batch, dropout off) with central finite differences. Relative error is
/// `|a - n| / max(|a|, |n|, abs_floor)`.
///
/// Half of each group's sample is drawn from coordinates with a nonzero
/// analytic gradient, so sparse tables such as embeddings are exercised.
pub fn gradient_check(
    examples: &[Example],
    params: &Parameters<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let inputs = examples.iter().map(|e| augment_example(e, params)).collect::<Result<Vec<_>>>()?;
    let targets: Vec<_> = examples.iter().map(|e| e.target.clone()).collect();
    let batch = pad_batch(&inputs, &targets, PAD)?;
    let (_, grads) = loss_and_grads(params, &batch, opts.smoothing, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut groups = Vec::with_capacity(grads.len());
    for (k, grad) in grads.iter().enumerate() {
        let n = grad.data().len();
        let coords: Vec<usize> = if n <= opts.coords_per_group {
            (0..n).collect()
        } else {
            let mut nonzero: Vec<usize> = (0..n).filter(|&i| grad.data()[i] != 0.0).collect();
            nonzero.shuffle(&mut rng);
            let mut picked: Vec<usize> = nonzero.into_iter().take(opts.coords_per_group / 2).collect();
            let mut rest: Vec<usize> = (0..n).filter(|i| !picked.contains(i)).collect();
            rest.shuffle(&mut rng);
            let need = opts.coords_per_group - picked.len();
            picked.extend(rest.into_iter().take(need));
            picked.sort_unstable();
            picked
        };
        let mut check = GroupCheck {
            name: params.names()[k].clone(),
            coords: coords.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            max_abs_analytic: 0.0,
        };
        for &i in &coords {
            let orig = params.tensor(k).data()[i];
            probe.tensor_mut(k).data_mut()[i] = orig + opts.step;
            let up = batch_loss(&probe, &batch, opts.smoothing)?;
            probe.tensor_mut(k).data_mut()[i] = orig - opts.step;
            let down = batch_loss(&probe, &batch, opts.smoothing)?;
            probe.tensor_mut(k).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let analytic = grad.data()[i];
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(opts.abs_floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_abs_analytic = check.max_abs_analytic.max(analytic.abs());
        }
        groups.push(check);
    }
    Ok(GradCheckReport { groups })
}
