//! Online continual learners over fixed feature vectors.
//!
//! Every learner consumes one labeled vector per [`Learner::fit_one`] call
//! and scores queries without task labels. Classes that have not been seen
//! score `-inf`; [`argmax`] breaks ties toward the lowest class index.

mod cbcl;
mod linear_head;
mod naive_bayes;
mod ncm;
mod perceptron;
mod replay;
mod slda;
mod sovr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cbcl::{Cbcl, MergeRule};
pub use linear_head::{FineTune, LinearHead, SgdConfig};
pub use naive_bayes::NaiveBayes;
pub use ncm::Ncm;
pub use perceptron::Perceptron;
pub use replay::{Replay, ReplayBuffer};
pub use slda::Slda;
pub use sovr::{RestNormalizer, Sovr};

pub trait Learner: Send + Sync {
    fn num_classes(&self) -> usize;

    fn dim(&self) -> usize;

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()>;

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    /// Number of scalars the learner keeps, caches excluded.
    fn stored_scalars(&self) -> u64;
}

/// Index of the largest score; the first one wins ties. NaN never wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    let mut found = false;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if !found || s > best_val {
            best = i;
            best_val = s;
            found = true;
        }
    }
    best
}

pub(crate) fn check_input(dim: usize, num_classes: usize, x: &[f64], y: usize) -> Result<()> {
    check_query(dim, x)?;
    if y >= num_classes {
        return Err(Error::LabelOutOfRange {
            label: y,
            num_classes,
        });
    }
    Ok(())
}

pub(crate) fn check_query(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn default_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_momentum() -> f64 {
    0.9
}
fn default_quota() -> usize {
    20
}
fn default_replay_samples() -> usize {
    50
}
fn default_shrinkage() -> f64 {
    crate::streaming_stats::DEFAULT_SHRINKAGE
}
fn default_threshold() -> f64 {
    17.0
}
fn default_max_centroids() -> usize {
    44
}

/// Learner selection plus hyperparameters. Defaults follow the published
/// settings: lr 1e-3, weight decay 1e-5, momentum 0.9, 50 replayed samples,
/// shrinkage 1e-4, CBCL threshold 17 with a 44-centroid cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Ncm,
    Sovr {
        #[serde(default)]
        rest_normalizer: RestNormalizer,
    },
    Slda {
        #[serde(default = "default_shrinkage")]
        shrinkage: f64,
    },
    NaiveBayes {
        #[serde(default = "default_shrinkage")]
        epsilon: f64,
    },
    Perceptron,
    FineTune {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Replay {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_weight_decay")]
        weight_decay: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_quota")]
        per_class_quota: usize,
        #[serde(default = "default_replay_samples")]
        replay_samples: usize,
    },
    Cbcl {
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default = "default_max_centroids")]
        max_centroids: usize,
        #[serde(default)]
        merge_rule: MergeRule,
    },
}

impl LearnerConfig {
    pub fn slda() -> Self {
        LearnerConfig::Slda {
            shrinkage: default_shrinkage(),
        }
    }

    pub fn naive_bayes() -> Self {
        LearnerConfig::NaiveBayes {
            epsilon: default_shrinkage(),
        }
    }

    pub fn sovr() -> Self {
        LearnerConfig::Sovr {
            rest_normalizer: RestNormalizer::default(),
        }
    }

    pub fn fine_tune(lr: f64) -> Self {
        LearnerConfig::FineTune {
            lr,
            weight_decay: default_weight_decay(),
            momentum: default_momentum(),
        }
    }

    pub fn replay(lr: f64, per_class_quota: usize) -> Self {
        LearnerConfig::Replay {
            lr,
            weight_decay: default_weight_decay(),
            momentum: default_momentum(),
            per_class_quota,
            replay_samples: default_replay_samples(),
        }
    }

    pub fn cbcl() -> Self {
        LearnerConfig::Cbcl {
            threshold: default_threshold(),
            max_centroids: default_max_centroids(),
            merge_rule: MergeRule::default(),
        }
    }

    /// Short identifier used in records and tables, e.g. `replay_20pc`.
    pub fn label(&self) -> String {
        match self {
            LearnerConfig::Ncm => "ncm".into(),
            LearnerConfig::Sovr { .. } => "sovr".into(),
            LearnerConfig::Slda { .. } => "slda".into(),
            LearnerConfig::NaiveBayes { .. } => "naive_bayes".into(),
            LearnerConfig::Perceptron => "perceptron".into(),
            LearnerConfig::FineTune { .. } => "fine_tune".into(),
            LearnerConfig::Replay {
                per_class_quota, ..
            } => format!("replay_{per_class_quota}pc"),
            LearnerConfig::Cbcl { .. } => "cbcl".into(),
        }
    }

    pub fn build(&self, num_classes: usize, dim: usize, seed: u64) -> Result<AnyLearner> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "learners need at least one class and dim >= 1".into(),
            ));
        }
        Ok(match *self {
            LearnerConfig::Ncm => AnyLearner::Ncm(Ncm::new(num_classes, dim)),
            LearnerConfig::Sovr { rest_normalizer } => {
                AnyLearner::Sovr(Sovr::with_normalizer(num_classes, dim, rest_normalizer))
            }
            LearnerConfig::Slda { shrinkage } => {
                AnyLearner::Slda(Slda::new(num_classes, dim, shrinkage)?)
            }
            LearnerConfig::NaiveBayes { epsilon } => {
                AnyLearner::NaiveBayes(NaiveBayes::new(num_classes, dim, epsilon)?)
            }
            LearnerConfig::Perceptron => AnyLearner::Perceptron(Perceptron::new(num_classes, dim)),
            LearnerConfig::FineTune {
                lr,
                weight_decay,
                momentum,
            } => AnyLearner::FineTune(FineTune::new(
                num_classes,
                dim,
                SgdConfig {
                    lr,
                    weight_decay,
                    momentum,
                },
            )),
            LearnerConfig::Replay {
                lr,
                weight_decay,
                momentum,
                per_class_quota,
                replay_samples,
            } => AnyLearner::Replay(Replay::new(
                num_classes,
                dim,
                SgdConfig {
                    lr,
                    weight_decay,
                    momentum,
                },
                per_class_quota,
                replay_samples,
                seed,
            )?),
            LearnerConfig::Cbcl {
                threshold,
                max_centroids,
                merge_rule,
            } => AnyLearner::Cbcl(Cbcl::new(
                num_classes,
                dim,
                threshold,
                max_centroids,
                merge_rule,
            )?),
        })
    }

    /// Closed-form [`Learner::stored_scalars`] for `num_classes` classes.
    /// `None` when storage depends on the data (CBCL).
    pub fn stored_scalars_at(&self, num_classes: usize, dim: usize) -> Option<u64> {
        let k = num_classes as u64;
        let d = dim as u64;
        match self {
            LearnerConfig::Ncm | LearnerConfig::Sovr { .. } => Some(k * d + k),
            LearnerConfig::Slda { .. } => Some(k * d + d * d + k),
            LearnerConfig::NaiveBayes { .. } => Some(2 * k * d + k),
            LearnerConfig::Perceptron => Some(k * d),
            LearnerConfig::FineTune { .. } => Some(k * d + k),
            LearnerConfig::Replay {
                per_class_quota, ..
            } => Some(k * d + k + *per_class_quota as u64 * k * d),
            LearnerConfig::Cbcl { .. } => None,
        }
    }
}

/// Enum dispatch over the concrete learners; serializable for checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum AnyLearner {
    Ncm(Ncm),
    Sovr(Sovr),
    Slda(Slda),
    NaiveBayes(NaiveBayes),
    Perceptron(Perceptron),
    FineTune(FineTune),
    Replay(Replay),
    Cbcl(Cbcl),
}

macro_rules! dispatch {
    ($self:expr, $l:ident => $body:expr) => {
        match $self {
            AnyLearner::Ncm($l) => $body,
            AnyLearner::Sovr($l) => $body,
            AnyLearner::Slda($l) => $body,
            AnyLearner::NaiveBayes($l) => $body,
            AnyLearner::Perceptron($l) => $body,
            AnyLearner::FineTune($l) => $body,
            AnyLearner::Replay($l) => $body,
            AnyLearner::Cbcl($l) => $body,
        }
    };
}

impl Learner for AnyLearner {
    fn num_classes(&self) -> usize {
        dispatch!(self, l => l.num_classes())
    }

    fn dim(&self) -> usize {
        dispatch!(self, l => l.dim())
    }

    fn fit_one(&mut self, x: &[f64], y: usize) -> Result<()> {
        dispatch!(self, l => l.fit_one(x, y))
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, l => l.scores(x))
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        dispatch!(self, l => l.predict(x))
    }

    fn stored_scalars(&self) -> u64 {
        dispatch!(self, l => l.stored_scalars())
    }
}

impl AnyLearner {
    /// Same identifier as [`LearnerConfig::label`].
    pub fn label(&self) -> String {
        match self {
            AnyLearner::Ncm(_) => "ncm".into(),
            AnyLearner::Sovr(_) => "sovr".into(),
            AnyLearner::Slda(_) => "slda".into(),
            AnyLearner::NaiveBayes(_) => "naive_bayes".into(),
            AnyLearner::Perceptron(_) => "perceptron".into(),
            AnyLearner::FineTune(_) => "fine_tune".into(),
            AnyLearner::Replay(r) => format!("replay_{}pc", r.buffer().quota()),
            AnyLearner::Cbcl(_) => "cbcl".into(),
        }
    }

    /// Writes the full learner state (accumulators, head weights, buffer
    /// contents and RNG state) as JSON.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}
