use std::sync::OnceLock;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_input, check_query, dot, Learner};
use crate::error::{Error, Result};
use crate::streaming_stats::{RunningMean, SharedCovariance};

#[derive(Debug, Clone)]
struct Discriminant {
    /// `Lambda mu_k` per class.
    weights: Vec<Vec<f64>>,
    /// `1/2 mu_k^T Lambda mu_k` per class.
    offsets: Vec<f64>,
}

/// Streaming linear discriminant analysis: running class means plus one
/// shared streaming covariance.
///
/// `score_k = (Lambda mu_k) . x - 1/2 mu_k^T Lambda mu_k` with
/// `Lambda = ((1 - eps) Sigma + eps I)^-1`. With `eps = 1` the precision is
/// the identity and the scores rank classes exactly as nearest-mean does.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Slda {
    dim: usize,
    means: Vec<RunningMean>,
    covariance: SharedCovariance,
    #[serde(skip)]
    discriminant: OnceLock<std::result::Result<Discriminant, String>>,
}

impl Slda {
    pub fn new(num_classes: usize, dim: usize, shrinkage: f64) -> Result<Self> {
        Ok(Self {
            dim,
            means: (0..num_classes).map(|_| RunningMean::new(dim)).collect(),
            covariance: SharedCovariance::new(dim, shrinkage)?,
            discriminant: OnceLock::new(),
        })
    }

    /// Test hook: full shrinkage, so the precision is exactly the identity.
    pub fn identity_precision(num_classes: usize, dim: usize) -> Self {
        Self::new(num_classes, dim, 1.0).expect("shrinkage 1 is valid")
    }

    pub fn means(&self) -> &[RunningMean] {
        &self.means
    }

    pub fn covariance(&self) -> &SharedCovariance {
        &self.covariance
    }

    fn discriminant(&self) -> Result<&Discriminant> {
        self.discriminant
            .get_or_init(|| {
                let precision = self.covariance.precision().map_err(|e| e.to_string())?;
                let mut weights = Vec::with_capacity(self.means.len());
                let mut offsets = Vec::with_capacity(self.means.len());
                for m in &self.means {
                    let w = (precision * DVector::from_column_slice(m.mean()))
                        .as_slice()
                        .to_vec();
                    offsets.push(0.5 * dot(m.mean(), &w));
                    weights.push(w);
                }
                Ok(Discriminant { weights, offsets })
            })
            .as_ref()
            .map_err(|e| Error::Factorization(e.clone()))
    }
}

impl Learner for Slda {
    fn num_classes(&self) -> usize {
        self.means.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Covariance first, against the pre-update class mean; then the mean.
    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        check_input(self.dim, self.means.len(), x, y)?;
        self.covariance.update(x, self.means[y].mean())?;
        self.means[y].update(x)?;
        self.discriminant = OnceLock::new();
        Ok(())
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_query(self.dim, x)?;
        let disc = self.discriminant()?;
        Ok(self
            .means
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if m.count() == 0 {
                    f64::NEG_INFINITY
                } else {
                    dot(&disc.weights[k], x) - disc.offsets[k]
                }
            })
            .collect())
    }

    fn stored_scalars(&self) -> u64 {
        let k = self.means.len() as u64;
        let d = self.dim as u64;
        k * d + d * d + k
    }
}
