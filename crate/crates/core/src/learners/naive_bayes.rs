use serde::{Deserialize, Serialize};

use super::{check_input, check_query, Learner};
use crate::error::{Error, Result};
use crate::streaming_stats::WelfordAccumulator;

/// Streaming Gaussian naive Bayes with per-class diagonal variances.
///
/// `score_k = -1/2 sum_j [(x_j - mu_kj)^2 / (var_kj + eps) + ln(var_kj + eps)]`
/// using the sample variance (divisor `n - 1`, zero for `n <= 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveBayes {
    dim: usize,
    epsilon: f64,
    classes: Vec<WelfordAccumulator>,
}

impl NaiveBayes {
    pub fn new(num_classes: usize, dim: usize, epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "variance floor must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            dim,
            epsilon,
            classes: (0..num_classes)
                .map(|_| WelfordAccumulator::new(dim))
                .collect(),
        })
    }

    pub fn accumulators(&self) -> &[WelfordAccumulator] {
        &self.classes
    }
}

impl Learner for NaiveBayes {
    fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.dim, self.classes.len(), x, y)?;
        self.classes[y].update(x)
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        Ok(self
            .classes
            .iter()
            .map(|acc| {
                if acc.count() == 0 {
                    return f64::NEG_INFINITY;
                }
                let var = acc.sample_variance();
                let s: f64 = x
                    .iter()
                    .zip(acc.mean())
                    .zip(&var)
                    .map(|((xj, mj), vj)| {
                        let v = vj + self.epsilon;
                        (xj - mj) * (xj - mj) / v + v.ln()
                    })
                    .sum();
                -0.5 * s
            })
            .collect())
    }

    /// Means and variances per class plus one count each.
    fn stored_scalars(&self) -> u64 {
        let k = self.classes.len() as u64;
        2 * k * self.dim as u64 + k
    }
}
