//! Single-pass estimators shared by the learners.
//!
//! All accumulators work in f64. [`SharedCovariance`] follows the usual streaming
//! LDA recurrence: the rank-1 deviation is taken
//! against the class mean *before* that mean absorbs the sample, and the
//! precision is `((1 - eps) * Sigma + eps * I)^-1`.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::FeatureFile;

pub const DEFAULT_SHRINKAGE: f64 = 1e-4;

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Per-class running mean and count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    mean: Vec<f64>,
    count: u64,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn from_parts(mean: Vec<f64>, count: u64) -> Self {
        Self { mean, count }
    }

    /// `w <- (c * w + x) / (c + 1)`, `c <- c + 1`.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.mean.len(), x.len())?;
        let c = self.count as f64;
        for (w, &xi) in self.mean.iter_mut().zip(x) {
            *w = (c * *w + xi) / (c + 1.0);
        }
        self.count += 1;
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Welford mean / sum-of-squared-deviations accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfordAccumulator {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: u64,
}

impl WelfordAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn from_parts(mean: Vec<f64>, m2: Vec<f64>, count: u64) -> Self {
        Self { mean, m2, count }
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.mean.len(), x.len())?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *mean;
            *mean += delta / n;
            *m2 += delta * (xi - *mean);
        }
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Sample variance `m2 / (n - 1)`; zero while `n <= 1`.
    pub fn sample_variance(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![0.0; self.m2.len()];
        }
        let denom = (self.count - 1) as f64;
        self.m2.iter().map(|v| v / denom).collect()
    }
}

/// Shared streaming covariance with a lazily cached shrunk precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharedCovariance {
    dim: usize,
    /// Row-major d x d.
    sigma: Vec<f64>,
    total_count: u64,
    shrinkage: f64,
    #[serde(skip)]
    precision: OnceLock<std::result::Result<DMatrix<f64>, String>>,
}

impl SharedCovariance {
    pub fn new(dim: usize, shrinkage: f64) -> Result<Self> {
        if !(shrinkage > 0.0 && shrinkage <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "shrinkage must be in (0, 1], got {shrinkage}"
            )));
        }
        Ok(Self {
            dim,
            sigma: vec![0.0; dim * dim],
            total_count: 0,
            shrinkage,
            precision: OnceLock::new(),
        })
    }

    /// Replaces Sigma wholesale. Used by tests and checkpoint restore.
    pub fn set_sigma(&mut self, sigma: &DMatrix<f64>, total_count: u64) -> Result<()> {
        check_dim(self.dim, sigma.nrows())?;
        check_dim(self.dim, sigma.ncols())?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.sigma[i * self.dim + j] = sigma[(i, j)];
            }
        }
        self.total_count = total_count;
        self.precision = OnceLock::new();
        Ok(())
    }

    /// `Delta = t (x - mu)(x - mu)^T / (t + 1)`, `Sigma <- (t Sigma + Delta) / (t + 1)`.
    ///
    /// `class_mean` must be the mean of `x`'s class before it absorbs `x`.
    pub fn update(&mut self, x: &[f64], class_mean: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, class_mean.len())?;
        let t = self.total_count as f64;
        let dev: Vec<f64> = x.iter().zip(class_mean).map(|(a, b)| a - b).collect();
        let d = self.dim;
        let w = t / (t + 1.0);
        for i in 0..d {
            for j in i..d {
                let delta = w * dev[i] * dev[j];
                let v = (t * self.sigma[i * d + j] + delta) / (t + 1.0);
                self.sigma[i * d + j] = v;
                self.sigma[j * d + i] = v;
            }
        }
        self.total_count += 1;
        self.precision = OnceLock::new();
        Ok(())
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.sigma)
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when an update happened since the precision was last computed.
    pub fn is_dirty(&self) -> bool {
        self.precision.get().is_none()
    }

    /// Cached `((1 - eps) Sigma + eps I)^-1`; recomputed after updates.
    pub fn precision(&self) -> Result<&DMatrix<f64>> {
        self.precision
            .get_or_init(|| {
                shrunk_precision(&self.sigma(), self.shrinkage).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Factorization(e.clone()))
    }

    /// Writes Sigma as `d` rows followed by one row holding
    /// `[total_count, 0, ...]`, in an f64 container.
    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut data = self.sigma.clone();
        let mut tail = vec![0.0; self.dim];
        tail[0] = self.total_count as f64;
        data.extend(tail);
        FeatureFile::from_f64(self.dim, data)?.write(path)?;
        Ok(())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>, shrinkage: f64) -> Result<Self> {
        let f = FeatureFile::open(path)?;
        let d = f.dim();
        if f.n_samples() != d as u64 + 1 {
            return Err(Error::InvalidArgument(
                "covariance checkpoint must have dim + 1 rows".into(),
            ));
        }
        let mut sigma = Vec::with_capacity(d * d);
        for i in 0..d as u64 {
            sigma.extend(f.get_row(i)?);
        }
        let total_count = f.get_row(d as u64)?[0] as u64;
        let mut cov = Self::new(d, shrinkage)?;
        cov.sigma = sigma;
        cov.total_count = total_count;
        Ok(cov)
    }
}

/// `((1 - eps) Sigma + eps I)^-1` via Cholesky.
pub fn shrunk_precision(sigma: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "shrinkage must be positive, got {epsilon}"
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization(
            "non-finite entries in covariance".into(),
        ));
    }
    let n = sigma.nrows();
    let a = sigma * (1.0 - epsilon) + DMatrix::<f64>::identity(n, n) * epsilon;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Factorization("matrix not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Writes running means as rows `[mean..., count]`.
pub fn write_means_checkpoint(path: impl AsRef<Path>, means: &[RunningMean]) -> Result<()> {
    let dim = means.first().map_or(1, |m| m.dim()) + 1;
    let mut data = Vec::with_capacity(means.len() * dim);
    for m in means {
        check_dim(dim - 1, m.dim())?;
        data.extend_from_slice(&m.mean);
        data.push(m.count as f64);
    }
    FeatureFile::from_f64(dim, data)?.write(path)?;
    Ok(())
}

pub fn read_means_checkpoint(path: impl AsRef<Path>) -> Result<Vec<RunningMean>> {
    let f = FeatureFile::open(path)?;
    (0..f.n_samples())
        .map(|i| {
            let mut row = f.get_row(i)?;
            let count = row.pop().unwrap_or(0.0) as u64;
            Ok(RunningMean::from_parts(row, count))
        })
        .collect()
}

/// Writes Welford accumulators as rows `[mean..., m2..., count]`.
pub fn write_welford_checkpoint(path: impl AsRef<Path>, accs: &[WelfordAccumulator]) -> Result<()> {
    let d = accs.first().map_or(0, |a| a.mean.len());
    let mut data = Vec::with_capacity(accs.len() * (2 * d + 1));
    for a in accs {
        check_dim(d, a.mean.len())?;
        data.extend_from_slice(&a.mean);
        data.extend_from_slice(&a.m2);
        data.push(a.count as f64);
    }
    FeatureFile::from_f64(2 * d + 1, data)?.write(path)?;
    Ok(())
}

pub fn read_welford_checkpoint(path: impl AsRef<Path>) -> Result<Vec<WelfordAccumulator>> {
    let f = FeatureFile::open(path)?;
    let d = (f.dim() - 1) / 2;
    (0..f.n_samples())
        .map(|i| {
            let row = f.get_row(i)?;
            Ok(WelfordAccumulator::from_parts(
                row[..d].to_vec(),
                row[d..2 * d].to_vec(),
                row[2 * d] as u64,
            ))
        })
        .collect()
}
