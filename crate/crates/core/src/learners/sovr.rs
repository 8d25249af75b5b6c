use serde::{Deserialize, Serialize};

use super::{check_input, check_query, dot, Learner};
use crate::error::Result;
use crate::streaming_stats::RunningMean;

/// Divisor of the "rest" vector `sum_{i != k} c_i w_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestNormalizer {
    /// `N = sum_i c_i` over all classes.
    #[default]
    TotalCount,
    /// `N - c_k`, the count of the rest only.
    RestCount,
}

/// Streaming one-vs-rest over running class means.
///
/// For class `k`, `d_k = x . w_k` and `d~_k = x . w~_k` with
/// `w~_k = (1/N) sum_{i != k} c_i w_i`. The score is `d_k / (d_k + d~_k)`,
/// or 0 when the denominator vanishes. Dot products are used unrectified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sovr {
    dim: usize,
    means: Vec<RunningMean>,
    normalizer: RestNormalizer,
}

impl Sovr {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self::with_normalizer(num_classes, dim, RestNormalizer::default())
    }

    pub fn with_normalizer(num_classes: usize, dim: usize, normalizer: RestNormalizer) -> Self {
        Self {
            dim,
            means: (0..num_classes).map(|_| RunningMean::new(dim)).collect(),
            normalizer,
        }
    }

    pub fn means(&self) -> &[RunningMean] {
        &self.means
    }
}

impl Learner for Sovr {
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

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        let total: f64 = self.means.iter().map(|m| m.count() as f64).sum();
        // x . (sum_i c_i w_i), so each rest term is one subtraction.
        let class_dots: Vec<f64> = self.means.iter().map(|m| dot(x, m.mean())).collect();
        let weighted_sum: f64 = self
            .means
            .iter()
            .zip(&class_dots)
            .map(|(m, d)| m.count() as f64 * d)
            .sum();
        Ok(self
            .means
            .iter()
            .zip(&class_dots)
            .map(|(m, &d_k)| {
                if m.count() == 0 {
                    return f64::NEG_INFINITY;
                }
                let c_k = m.count() as f64;
                let n = match self.normalizer {
                    RestNormalizer::TotalCount => total,
                    RestNormalizer::RestCount => total - c_k,
                };
                let rest = if n > 0.0 {
                    (weighted_sum - c_k * d_k) / n
                } else {
                    0.0
                };
                let denom = d_k + rest;
                if denom == 0.0 {
                    0.0
                } else {
                    d_k / denom
                }
            })
            .collect())
    }

    fn stored_scalars(&self) -> u64 {
        let k = self.means.len() as u64;
        k * self.dim as u64 + k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_worked_two_class_case() {
        let mut l = Sovr::new(2, 2);
        l.fit_one(&[1.0, 0.0], 0).unwrap();
        l.fit_one(&[0.0, 1.0], 1).unwrap();
        // w~_0 = (0, 1/2), w~_1 = (1/2, 0).
        let s = l.scores(&[1.0, 0.0]).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        assert_eq!(l.predict(&[1.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let mut l = Sovr::new(3, 3);
        l.fit_one(&[1.0, 0.0, 0.0], 0).unwrap();
        l.fit_one(&[0.0, 1.0, 0.0], 1).unwrap();
        l.fit_one(&[1.0, 1.0, 0.0], 2).unwrap();
        let s = l.scores(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(s, vec![0.0, 0.0, 0.0]);
        assert_eq!(l.predict(&[0.0, 0.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn rest_count_variant() {
        let mut l = Sovr::with_normalizer(2, 2, RestNormalizer::RestCount);
        l.fit_one(&[1.0, 0.0], 0).unwrap();
        l.fit_one(&[0.0, 1.0], 1).unwrap();
        l.fit_one(&[0.0, 1.0], 1).unwrap();
        // w~_0 = (2 * (0,1)) / 2 = (0,1); x = (1,1): d_0 = 1, d~_0 = 1.
        let s = l.scores(&[1.0, 1.0]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        // w~_1 = (1,0) / 1; d_1 = 1, d~_1 = 1.
        assert!((s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unseen_class_is_sentinel() {
        let mut l = Sovr::new(2, 2);
        l.fit_one(&[1.0, 1.0], 1).unwrap();
        let s = l.scores(&[1.0, 0.0]).unwrap();
        assert_eq!(s[0], f64::NEG_INFINITY);
        // Only one class seen: rest vector is zero, score = d/d = 1.
        assert_eq!(s[1], 1.0);
    }
}
