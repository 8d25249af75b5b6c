//! Accuracy, aggregation rules, NetScore and experiment records.
//!
//! NetScore uses the natural logarithm. Back-solving the published numbers
//! settles this: `20 * ln(44.2^2 / (950048^0.25 * 1035^0.25)) = 48.03`
//! reproduces a printed 48.0, whereas base 10 would give 20.9. Accuracy
//! enters in percent and compute in seconds.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{BackboneConstant, Dataset};
use crate::learners::{Learner, LearnerConfig};

/// Evaluation samples held in memory as `f64` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPool {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledPool {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    /// Loads the given manifest samples from `dataset`.
    pub fn from_samples(
        dataset: &Dataset,
        sample_ids: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        let mut pool = Self::default();
        for id in sample_ids {
            let (x, y) = dataset.sample(id)?;
            pool.features.push(x);
            pool.labels.push(y);
        }
        Ok(pool)
    }

    /// The dataset's test split.
    pub fn test_split(dataset: &Dataset) -> Result<Self> {
        let ids: Vec<u64> = dataset.manifest().test().map(|r| r.sample_id).collect();
        Self::from_samples(dataset, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Top-1 accuracy in percent over the pool samples whose label passes
/// `classes` (all samples when `None`). Predictions fan out over rayon.
pub fn evaluate<L: Learner + ?Sized>(
    learner: &L,
    pool: &LabeledPool,
    classes: Option<&[u32]>,
) -> Result<f64> {
    let keep = |y: usize| classes.is_none_or(|c| c.binary_search(&(y as u32)).is_ok());
    let idx: Vec<usize> = (0..pool.len()).filter(|&i| keep(pool.labels[i])).collect();
    if idx.is_empty() {
        return Err(Error::EmptyPool);
    }
    let correct = idx
        .par_iter()
        .map(|&i| {
            Ok(usize::from(
                learner.predict(&pool.features[i])? == pool.labels[i],
            ))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(100.0 * correct as f64 / idx.len() as f64)
}

/// `2ab / (a + b)`, or 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn mean_across_backbones(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("mean of no values".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetScoreParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub scale: f64,
}

impl NetScoreParams {
    /// Exponents used for the main results.
    pub const DEFAULT: Self = Self {
        alpha: 2.0,
        beta: 0.25,
        gamma: 0.25,
        scale: 20.0,
    };

    /// The original parameterization with square-root penalties.
    pub const ORIGINAL: Self = Self {
        alpha: 2.0,
        beta: 0.5,
        gamma: 0.5,
        scale: 20.0,
    };
}

impl Default for NetScoreParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// `s * ln(a^alpha / (p^beta * c^gamma))` for accuracy `a` in percent,
/// `p` parameters and `c` seconds.
pub fn netscore(accuracy: f64, params: f64, seconds: f64, np: NetScoreParams) -> Result<f64> {
    for (name, v) in [
        ("accuracy", accuracy),
        ("params", params),
        ("seconds", seconds),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "netscore needs positive finite {name}, got {v}"
            )));
        }
    }
    Ok(np.scale * (np.alpha * accuracy.ln() - np.beta * params.ln() - np.gamma * seconds.ln()))
}

/// NetScore with compute scaled by `factor >= 1`.
pub fn project_samples(record: &ExperimentRecord, factor: f64, np: NetScoreParams) -> Result<f64> {
    if factor.is_nan() || factor < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "sample scale factor must be >= 1, got {factor}"
        )));
    }
    netscore(
        record.final_accuracy,
        record.param_count as f64,
        record.wall_seconds * factor,
        np,
    )
}

/// NetScore with parameters re-evaluated at `num_classes` classes.
pub fn project_classes(
    record: &ExperimentRecord,
    num_classes: usize,
    np: NetScoreParams,
) -> Result<f64> {
    if num_classes < record.num_classes {
        return Err(Error::InvalidArgument(format!(
            "cannot project to {num_classes} classes from {}",
            record.num_classes
        )));
    }
    let stored = record
        .learner_config
        .stored_scalars_at(num_classes, record.backbone.feature_dim)
        .ok_or_else(|| Error::NoMemoryModel(record.learner.clone()))?;
    netscore(
        record.final_accuracy,
        (record.backbone.param_count + stored) as f64,
        record.wall_seconds,
        np,
    )
}

/// Affine map sending the minimum to 0 and the maximum to 1. All-equal
/// input maps to all zeros.
pub fn normalize_for_summary(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub checkpoint: usize,
    pub position: usize,
    pub seen_classes: usize,
    pub accuracy: f64,
}

/// Outcome of one (dataset, learner, ordering, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub learner: String,
    pub learner_config: LearnerConfig,
    pub ordering: String,
    pub backbone: BackboneConstant,
    pub seed: u64,
    pub num_classes: usize,
    pub final_accuracy: f64,
    pub curve: Vec<CurvePoint>,
    /// Train plus evaluation time.
    pub wall_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    /// Backbone parameters plus learner storage.
    pub param_count: u64,
    /// `None` when a NetScore input is zero (e.g. 0% accuracy).
    pub netscore: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow<'a> {
    learner: &'a str,
    ordering: &'a str,
    backbone: &'a str,
    seed: u64,
    final_acc: f64,
    seconds: f64,
    params: u64,
    netscore: Option<f64>,
}

impl ExperimentRecord {
    /// Appends one JSON object per record.
    pub fn write_jsonl<W: Write>(records: &[ExperimentRecord], mut out: W) -> Result<()> {
        for r in records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ExperimentRecord>> {
        let mut out = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }

    pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    /// The flat summary table, one row per record.
    pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in records {
            w.serialize(CsvRow {
                learner: &r.learner,
                ordering: &r.ordering,
                backbone: &r.backbone.name,
                seed: r.seed,
                final_acc: r.final_accuracy,
                seconds: r.wall_seconds,
                params: r.param_count,
                netscore: r.netscore,
            })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
