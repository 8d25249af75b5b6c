use serde::{Deserialize, Serialize};

use super::{check_input, check_query, dot, Learner};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-5,
            momentum: 0.9,
        }
    }
}

/// Softmax-regression output layer trained by SGD with momentum.
///
/// Weights start at zero and are allocated for every class up front.
/// The objective for a batch is mean cross-entropy plus
/// `weight_decay / 2 * ||W||^2` (the bias is not decayed), so its gradient
/// is `mean_i (softmax(W x_i + b) - onehot(y_i)) x_i^T + weight_decay * W`.
/// Each step does `v <- momentum * v + g`, `theta <- theta - lr * v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    num_classes: usize,
    dim: usize,
    /// Row-major K x d.
    weights: Vec<f64>,
    bias: Vec<f64>,
    velocity_w: Vec<f64>,
    velocity_b: Vec<f64>,
    sgd: SgdConfig,
}

/// Gradient of the batch objective, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(num_classes: usize, dim: usize, sgd: SgdConfig) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            velocity_w: vec![0.0; num_classes * dim],
            velocity_b: vec![0.0; num_classes],
            sgd,
        }
    }

    pub fn with_parameters(
        num_classes: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        sgd: SgdConfig,
    ) -> Result<Self> {
        if weights.len() != num_classes * dim {
            return Err(Error::DimensionMismatch {
                expected: num_classes * dim,
                actual: weights.len(),
            });
        }
        if bias.len() != num_classes {
            return Err(Error::DimensionMismatch {
                expected: num_classes,
                actual: bias.len(),
            });
        }
        let mut head = Self::new(num_classes, dim, sgd);
        head.weights = weights;
        head.bias = bias;
        Ok(head)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn sgd(&self) -> SgdConfig {
        self.sgd
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// Mean cross-entropy over the batch plus the L2 penalty.
    pub fn loss(&self, batch: &[(&[f64], usize)]) -> f64 {
        let ce: f64 = batch
            .iter()
            .map(|(x, y)| {
                let z = self.logits(x);
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - z[*y]
            })
            .sum::<f64>()
            / batch.len() as f64;
        let l2: f64 = self.weights.iter().map(|w| w * w).sum();
        ce + 0.5 * self.sgd.weight_decay * l2
    }

    pub fn gradient(&self, batch: &[(&[f64], usize)]) -> Result<HeadGradient> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = batch.len() as f64;
        let mut gw: Vec<f64> = self
            .weights
            .iter()
            .map(|w| self.sgd.weight_decay * w)
            .collect();
        let mut gb = vec![0.0; self.num_classes];
        for (x, y) in batch {
            check_input(self.dim, self.num_classes, x, *y)?;
            let mut p = Self::softmax(&self.logits(x));
            p[*y] -= 1.0;
            for (k, pk) in p.iter().enumerate() {
                let coef = pk / n;
                gb[k] += coef;
                for (g, xi) in gw[k * self.dim..(k + 1) * self.dim]
                    .iter_mut()
                    .zip(x.iter())
                {
                    *g += coef * xi;
                }
            }
        }
        if gw.iter().chain(&gb).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(HeadGradient {
            weights: gw,
            bias: gb,
        })
    }

    /// One SGD-with-momentum step on the batch objective.
    pub fn step(&mut self, batch: &[(&[f64], usize)]) -> Result<()> {
        let g = self.gradient(batch)?;
        let SgdConfig { lr, momentum, .. } = self.sgd;
        for ((p, v), gi) in self
            .weights
            .iter_mut()
            .zip(self.velocity_w.iter_mut())
            .zip(&g.weights)
        {
            *v = momentum * *v + gi;
            *p -= lr * *v;
        }
        for ((p, v), gi) in self
            .bias
            .iter_mut()
            .zip(self.velocity_b.iter_mut())
            .zip(&g.bias)
        {
            *v = momentum * *v + gi;
            *p -= lr * *v;
        }
        Ok(())
    }

    /// `K * d` weights plus `K` biases.
    pub fn parameter_count(&self) -> u64 {
        (self.num_classes * self.dim + self.num_classes) as u64
    }
}

/// Fine-tunes the output layer on each sample as it arrives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FineTune {
    head: LinearHead,
}

impl FineTune {
    pub fn new(num_classes: usize, dim: usize, sgd: SgdConfig) -> Self {
        Self {
            head: LinearHead::new(num_classes, dim, sgd),
        }
    }

    pub fn from_head(head: LinearHead) -> Self {
        Self { head }
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }
}

impl Learner for FineTune {
    fn num_classes(&self) -> usize {
        self.head.num_classes
    }

    fn dim(&self) -> usize {
        self.head.dim
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.head.dim, self.head.num_classes, x, y)?;
        self.head.step(&[(x, y)])
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.head.dim, x)?;
        Ok(self.head.logits(x))
    }

    fn stored_scalars(&self) -> u64 {
        self.head.parameter_count()
    }
}
