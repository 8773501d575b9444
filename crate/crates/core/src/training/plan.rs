use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{pad_batch, AugmentConfig, AugmentedInput, Batch, Example, TokenId, PAD};
use crate::{Error, Result};

/// Examples with their augmented inputs built once up front.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<AugmentedInput>,
    pub targets: Vec<Vec<TokenId>>,
}

impl TrainingSet {
    /// Fails on the first example whose source or target exceeds the limits.
    pub fn build(examples: &[Example], cfg: &AugmentConfig, max_tgt_len: usize) -> Result<Self> {
        let mut set = TrainingSet { inputs: Vec::with_capacity(examples.len()), targets: Vec::new() };
        for ex in examples {
            if ex.target.len() + 1 > max_tgt_len {
                return Err(Error::InvalidConfig(alloc::format!(
                    "target of length {} exceeds max_tgt_len {max_tgt_len}",
                    ex.target.len()
                )));
            }
            set.inputs.push(AugmentedInput::build(&ex.source, &ex.constraints, cfg)?);
            set.targets.push(ex.target.clone());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Encoder plus decoder positions of example `i`.
    pub fn cost(&self, i: usize) -> (usize, usize) {
        (self.inputs[i].len(), self.targets[i].len() + 1)
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let inputs: Vec<_> = indices.iter().map(|&i| self.inputs[i].clone()).collect();
        let targets: Vec<_> = indices.iter().map(|&i| self.targets[i].clone()).collect();
        pad_batch(&inputs, &targets, PAD)
    }
}

const WINDOW: usize = 256;

/// Deterministic batches for one epoch: shuffle, sort within windows by
/// length to limit padding, pack under `batch_tokens`, shuffle batches.
pub fn epoch_plan(costs: &[(usize, usize)], batch_tokens: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    for window in order.chunks_mut(WINDOW) {
        window.sort_by_key(|&i| (costs[i].0 + costs[i].1, i));
        let mut current: Vec<usize> = Vec::new();
        let (mut src, mut tgt) = (0, 0);
        for &i in window.iter() {
            let (s, t) = costs[i];
            let (ns, nt) = (src.max(s), tgt.max(t));
            if !current.is_empty() && (current.len() + 1) * (ns + nt) > batch_tokens {
                batches.push(core::mem::take(&mut current));
                src = s;
                tgt = t;
            } else {
                src = ns;
                tgt = nt;
            }
            current.push(i);
        }
        if !current.is_empty() {
            batches.push(current);
        }
    }
    batches.shuffle(&mut rng);
    batches
}

/// Maps global update numbers to batches across epochs, so a resumed run
/// sees the same data order as an uninterrupted one.
#[derive(Debug, Clone)]
pub struct BatchSchedule {
    costs: Vec<(usize, usize)>,
    batch_tokens: usize,
    seed: u64,
    epoch_starts: Vec<u64>,
    current: Option<(u64, Vec<Vec<usize>>)>,
}

impl BatchSchedule {
    pub fn new(set: &TrainingSet, batch_tokens: usize, seed: u64) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        let costs = (0..set.len()).map(|i| set.cost(i)).collect();
        Ok(BatchSchedule { costs, batch_tokens, seed, epoch_starts: alloc::vec![0], current: None })
    }

    fn plan(&mut self, epoch: u64) -> &[Vec<usize>] {
        if self.current.as_ref().map(|c| c.0) != Some(epoch) {
            let plan = epoch_plan(&self.costs, self.batch_tokens, self.seed, epoch);
            self.current = Some((epoch, plan));
        }
        &self.current.as_ref().expect("just set").1
    }

    /// Zero-based epoch and example indices of update `step` (zero-based).
    pub fn batch_for_step(&mut self, step: u64) -> (u64, Vec<usize>) {
        loop {
            let epoch = self.epoch_starts.len() as u64 - 1;
            let start = self.epoch_starts[epoch as usize];
            let len = self.plan(epoch).len() as u64;
            if step < start {
                // walk back: find the epoch that contains `step`
                let e = self.epoch_starts.partition_point(|&s| s <= step) as u64 - 1;
                let off = (step - self.epoch_starts[e as usize]) as usize;
                return (e, self.plan(e)[off].clone());
            }
            if step < start + len {
                return (epoch, self.plan(epoch)[(step - start) as usize].clone());
            }
            self.epoch_starts.push(start + len);
        }
    }
}
