use serde::{Deserialize, Serialize};

use super::{argmax, check_input, check_query, dot, Learner};
use crate::error::Result;

/// Mistake-driven multiclass perceptron.
///
/// A class's first sample becomes its weight vector with no further update
/// that step. Afterwards a mistake adds `x` to the true class and subtracts
/// it from the highest-scoring wrong class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Perceptron {
    dim: usize,
    weights: Vec<Option<Vec<f64>>>,
}

impl Perceptron {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            weights: vec![None; num_classes],
        }
    }

    pub fn weights(&self, class: usize) -> Option<&[f64]> {
        self.weights.get(class).and_then(|w| w.as_deref())
    }

    pub fn set_weights(&mut self, class: usize, w: Vec<f64>) {
        self.weights[class] = Some(w);
    }
}

impl Learner for Perceptron {
    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.dim, self.weights.len(), x, y)?;
        if self.weights[y].is_none() {
            self.weights[y] = Some(x.to_vec());
            return Ok(());
        }
        let scores = self.scores(x)?;
        if argmax(&scores) == y {
            return Ok(());
        }
        let mut wrong = scores.clone();
        wrong[y] = f64::NEG_INFINITY;
        let i = argmax(&wrong);
        for (w, xi) in self.weights[y].as_mut().unwrap().iter_mut().zip(x) {
            *w += xi;
        }
        if let Some(wi) = self.weights[i].as_mut() {
            for (w, xi) in wi.iter_mut().zip(x) {
                *w -= xi;
            }
        }
        Ok(())
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        Ok(self
            .weights
            .iter()
            .map(|w| w.as_ref().map_or(f64::NEG_INFINITY, |w| dot(w, x)))
            .collect())
    }

    fn stored_scalars(&self) -> u64 {
        (self.weights.len() * self.dim) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_sample_sets_weights() {
        let mut p = Perceptron::new(3, 2);
        p.fit_one(&[0.5, -1.0], 1).unwrap();
        assert_eq!(p.weights(1), Some(&[0.5, -1.0][..]));
        assert_eq!(p.weights(0), None);
    }

    #[test]
    fn correct_prediction_leaves_state() {
        let mut p = Perceptron::new(2, 2);
        p.fit_one(&[1.0, 0.0], 0).unwrap();
        p.fit_one(&[0.0, 1.0], 1).unwrap();
        let before = p.clone();
        p.fit_one(&[2.0, 0.5], 0).unwrap();
        assert_eq!(p.weights, before.weights);
    }

    #[test]
    fn mistake_update() {
        let mut p = Perceptron::new(2, 2);
        p.set_weights(0, vec![1.0, 0.0]);
        p.set_weights(1, vec![0.0, 1.0]);
        p.fit_one(&[0.0, 2.0], 0).unwrap();
        assert_eq!(p.weights(0), Some(&[1.0, 2.0][..]));
        assert_eq!(p.weights(1), Some(&[0.0, -1.0][..]));
    }

    #[test]
    fn only_true_class_initialized_means_no_update() {
        let mut p = Perceptron::new(2, 1);
        p.fit_one(&[1.0], 0).unwrap();
        p.fit_one(&[-3.0], 0).unwrap();
        assert_eq!(p.weights(0), Some(&[1.0][..]));
    }
}
