use serde::{Deserialize, Serialize};

use super::{check_input, check_query, sq_dist, Learner};
use crate::error::Result;
use crate::streaming_stats::RunningMean;

/// Nearest class mean under Euclidean distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ncm {
    dim: usize,
    means: Vec<RunningMean>,
}

impl Ncm {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            means: (0..num_classes).map(|_| RunningMean::new(dim)).collect(),
        }
    }

    pub fn means(&self) -> &[RunningMean] {
        &self.means
    }
}

impl Learner for Ncm {
    fn num_classes(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.dim, self.means.len(), x, y)?;
        self.means[y].update(x)
    }

    /// `-||x - mu_k||`, `-inf` for unseen classes.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        Ok(self
            .means
            .iter()
            .map(|m| {
                if m.count() == 0 {
                    f64::NEG_INFINITY
                } else {
                    -sq_dist(x, m.mean()).sqrt()
                }
            })
            .collect())
    }

    fn stored_scalars(&self) -> u64 {
        let k = self.means.len() as u64;
        k * self.dim as u64 + k
    }
}
