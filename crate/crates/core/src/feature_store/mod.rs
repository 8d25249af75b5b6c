//! Labeled feature datasets: the binary `OCLF` container, the CSV manifest
//! that carries labels, splits and groups, and a seeded synthetic generator.

mod file;
mod manifest;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{Dtype, FeatureFile, FeatureFileHeader, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use manifest::{Manifest, ManifestRecord, Split};
pub use synth::{synthesize_gaussian_dataset, SynthConfig};

/// One sample prior to being written out.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f32>,
    pub class_id: u32,
    pub split: Split,
    pub group_id: Option<u64>,
}

/// Builds the in-memory feature file and manifest for `samples`.
/// Sample ids and row indices follow insertion order.
pub fn build_dataset(dim: usize, samples: &[LabeledSample]) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidArgument("feature dim must be >= 1".into()));
    }
    let mut data = Vec::with_capacity(samples.len() * dim);
    let mut records = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.features.len(),
            });
        }
        data.extend_from_slice(&s.features);
        records.push(ManifestRecord {
            sample_id: i as u64,
            split: s.split,
            class_id: s.class_id,
            group_id: s.group_id,
            row_index: i as u64,
        });
    }
    Dataset::new(FeatureFile::from_f32(dim, data)?, Manifest::new(records)?)
}

/// Writes `samples` to a feature file and its manifest.
pub fn write_feature_file(
    dim: usize,
    samples: &[LabeledSample],
    features_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<(FeatureFileHeader, Manifest)> {
    let ds = build_dataset(dim, samples)?;
    let header = ds.write(features_path, manifest_path)?;
    Ok((header, ds.manifest))
}

/// A feature file paired with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: FeatureFile,
    manifest: Manifest,
}

impl Dataset {
    pub fn new(features: FeatureFile, manifest: Manifest) -> Result<Self> {
        manifest.validate(features.n_samples())?;
        Ok(Self { features, manifest })
    }

    pub fn open(features_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<Self> {
        Self::new(
            FeatureFile::open(features_path)?,
            Manifest::read(manifest_path)?,
        )
    }

    pub fn write(
        &self,
        features_path: impl AsRef<Path>,
        manifest_path: impl AsRef<Path>,
    ) -> Result<FeatureFileHeader> {
        let header = self.features.write(features_path)?;
        self.manifest.write(manifest_path)?;
        Ok(header)
    }

    pub fn features(&self) -> &FeatureFile {
        &self.features
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    /// Feature row and label of a manifest sample.
    pub fn sample(&self, sample_id: u64) -> Result<(Vec<f64>, usize)> {
        let rec = self
            .manifest
            .get(sample_id)
            .ok_or_else(|| Error::Manifest(format!("unknown sample_id {sample_id}")))?;
        Ok((self.features.get_row(rec.row_index)?, rec.class_id as usize))
    }
}

/// A frozen feature extractor, reduced to what the harness needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConstant {
    pub name: String,
    pub feature_dim: usize,
    pub param_count: u64,
}

impl BackboneConstant {
    pub fn new(name: impl Into<String>, feature_dim: usize, param_count: u64) -> Self {
        Self {
            name: name.into(),
            feature_dim,
            param_count,
        }
    }

    /// The five ImageNet backbones. Parameter counts exclude the classifier
    /// head; each equals a published 40-class total minus `40 * d`.
    pub fn presets() -> Vec<BackboneConstant> {
        vec![
            Self::new("mobilenet_v3_small", 576, 927_008),
            Self::new("mobilenet_v3_large", 960, 2_971_952),
            Self::new("efficientnet_b0", 1280, 4_007_548),
            Self::new("efficientnet_b1", 1280, 6_513_184),
            Self::new("resnet18", 512, 11_176_512),
        ]
    }

    pub fn preset(name: &str) -> Option<BackboneConstant> {
        Self::presets().into_iter().find(|b| b.name == name)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: dim,
            });
        }
        Ok(())
    }
}
