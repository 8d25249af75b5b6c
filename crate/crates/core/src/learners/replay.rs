use serde::{Deserialize, Serialize};

use super::linear_head::{LinearHead, SgdConfig};
use super::{check_input, check_query, Learner};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Class-partitioned sample store holding at most `quota * num_classes`
/// verbatim copies.
///
/// Insertions append while there is room. Once full, a uniformly random
/// element of a most-represented class is evicted first, with ties among
/// those classes broken by the buffer's own generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    quota: usize,
    per_class: Vec<Vec<Vec<f64>>>,
    len: usize,
    rng: StreamRng,
}

impl ReplayBuffer {
    pub fn new(num_classes: usize, quota: usize, seed: u64) -> Result<Self> {
        if quota == 0 {
            return Err(Error::InvalidArgument("replay quota must be >= 1".into()));
        }
        Ok(Self {
            quota,
            per_class: vec![Vec::new(); num_classes],
            len: 0,
            rng: rng::seeded(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.quota * self.per_class.len()
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }

    pub fn class_samples(&self, class: usize) -> &[Vec<f64>] {
        &self.per_class[class]
    }

    /// Stores `x` under `y`; returns the class an element was evicted from.
    pub fn insert(&mut self, x: &[f64], y: usize) -> Option<usize> {
        let mut evicted = None;
        if self.len >= self.capacity() {
            let max = self.per_class.iter().map(Vec::len).max().unwrap_or(0);
            let largest: Vec<usize> = (0..self.per_class.len())
                .filter(|&k| self.per_class[k].len() == max)
                .collect();
            let class = largest[rng::below_usize(&mut self.rng, largest.len())];
            let slot = rng::below_usize(&mut self.rng, max);
            self.per_class[class].swap_remove(slot);
            self.len -= 1;
            evicted = Some(class);
        }
        self.per_class[y].push(x.to_vec());
        self.len += 1;
        evicted
    }

    /// Up to `m` stored samples drawn uniformly without replacement.
    pub fn sample(&mut self, m: usize) -> Vec<(&[f64], usize)> {
        let picks = rng::sample_indices(&mut self.rng, self.len, m);
        let mut offsets = Vec::with_capacity(self.per_class.len());
        let mut acc = 0;
        for c in &self.per_class {
            offsets.push(acc);
            acc += c.len();
        }
        picks
            .into_iter()
            .map(|flat| {
                let class = offsets.partition_point(|&o| o <= flat) - 1;
                (
                    self.per_class[class][flat - offsets[class]].as_slice(),
                    class,
                )
            })
            .collect()
    }
}

/// Fine-tuning with rehearsal from a class-balanced buffer.
///
/// Each step trains on the new sample together with up to `replay_samples`
/// buffered ones (one SGD step on the batch's mean cross-entropy) and only
/// then stores the new sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Replay {
    head: LinearHead,
    buffer: ReplayBuffer,
    replay_samples: usize,
}

impl Replay {
    pub fn new(
        num_classes: usize,
        dim: usize,
        sgd: SgdConfig,
        per_class_quota: usize,
        replay_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            head: LinearHead::new(num_classes, dim, sgd),
            buffer: ReplayBuffer::new(num_classes, per_class_quota, seed)?,
            replay_samples,
        })
    }

    /// Starts from an existing head instead of zeros.
    pub fn with_head(
        head: LinearHead,
        per_class_quota: usize,
        replay_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            buffer: ReplayBuffer::new(head.num_classes(), per_class_quota, seed)?,
            head,
            replay_samples,
        })
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// The batch the next `fit_one(x, y)` would train on, without the
    /// buffer update. Advances the buffer's generator.
    fn batch<'a>(&'a mut self, x: &'a [f64], y: usize) -> Vec<(&'a [f64], usize)> {
        let mut batch = vec![(x, y)];
        batch.extend(self.buffer.sample(self.replay_samples));
        batch
    }
}

impl Learner for Replay {
    fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    fn dim(&self) -> usize {
        self.head.dim()
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.head.dim(), self.head.num_classes(), x, y)?;
        let mut head = self.head.clone();
        head.step(&self.batch(x, y))?;
        self.head = head;
        self.buffer.insert(x, y);
        Ok(())
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.head.dim(), x)?;
        Ok(self.head.logits(x))
    }

    /// Head parameters plus a full buffer's worth of sample scalars.
    fn stored_scalars(&self) -> u64 {
        self.head.parameter_count() + (self.buffer.capacity() * self.head.dim()) as u64
    }
}
