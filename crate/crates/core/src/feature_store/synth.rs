use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{build_dataset, Dataset, LabeledSample, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of the isotropic Gaussian class-mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub class_mean_scale: f64,
    pub noise_sigma: f64,
    /// Norm of a direction added to every class mean. Real backbone
    /// features share a large common component; a nonzero value mimics it.
    pub shared_mean_norm: f64,
    /// Consecutive train samples per pseudo-video.
    pub group_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            train_per_class: 100,
            test_per_class: 50,
            class_mean_scale: 5.0,
            noise_sigma: 1.0,
            shared_mean_norm: 10.0,
            group_size: 10,
            seed: 0,
        }
    }
}

/// Generates a dataset and returns it with the class means used.
///
/// Each class mean is a standard-normal direction rescaled to norm
/// `class_mean_scale`, plus a shared direction of norm `shared_mean_norm`
/// drawn after them. Samples are `mean + noise_sigma * z`. Manifest order
/// is class-major: the train samples of class 0, its test samples, then
/// class 1, and so on. Train sample `j` of class `k` belongs to pseudo-video
/// `k * ceil(train_per_class / group_size) + j / group_size`; test samples
/// carry no group.
pub fn synthesize_gaussian_dataset(cfg: &SynthConfig) -> Result<(Dataset, Vec<Vec<f64>>)> {
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if cfg.dim < 2 {
        return Err(Error::InvalidArgument("need dim >= 2".into()));
    }
    if cfg.train_per_class == 0 || cfg.test_per_class == 0 || cfg.group_size == 0 {
        return Err(Error::InvalidArgument(
            "sample counts and group size must be positive".into(),
        ));
    }
    if !(cfg.class_mean_scale.is_finite()
        && cfg.shared_mean_norm.is_finite()
        && cfg.noise_sigma.is_finite()
        && cfg.noise_sigma >= 0.0)
    {
        return Err(Error::InvalidArgument(
            "mean scales and noise sigma must be finite, sigma >= 0".into(),
        ));
    }

    let mut rng = rng::seeded(cfg.seed);
    let mut direction = |scale: f64| -> Vec<f64> {
        let z: Vec<f64> = (0..cfg.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter().map(|v| v * scale / norm).collect()
    };
    let mut means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| direction(cfg.class_mean_scale))
        .collect();
    let shared = direction(cfg.shared_mean_norm);
    for m in &mut means {
        for (v, s) in m.iter_mut().zip(&shared) {
            *v += s;
        }
    }

    let groups_per_class = cfg.train_per_class.div_ceil(cfg.group_size) as u64;
    let mut samples = Vec::with_capacity(cfg.classes * (cfg.train_per_class + cfg.test_per_class));
    for (k, mean) in means.iter().enumerate() {
        for j in 0..cfg.train_per_class + cfg.test_per_class {
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (m + cfg.noise_sigma * z) as f32
                })
                .collect();
            let (split, group_id) = if j < cfg.train_per_class {
                let g = k as u64 * groups_per_class + (j / cfg.group_size) as u64;
                (Split::Train, Some(g))
            } else {
                (Split::Test, None)
            };
            samples.push(LabeledSample {
                features,
                class_id: k as u32,
                split,
                group_id,
            });
        }
    }
    Ok((build_dataset(cfg.dim, &samples)?, means))
}
