use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{BackboneConstant, Dataset};
use crate::learners::LearnerConfig;
use crate::metrics::NetScoreParams;
use crate::stream_orderings::{OrderingConfig, OrderingKind};

/// A backbone given either by preset name or spelled out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackboneSpec {
    Preset(String),
    Custom(BackboneConstant),
}

impl BackboneSpec {
    pub fn resolve(&self) -> Result<BackboneConstant> {
        match self {
            BackboneSpec::Preset(name) => BackboneConstant::preset(name)
                .ok_or_else(|| Error::Config(format!("unknown backbone preset {name:?}"))),
            BackboneSpec::Custom(b) => Ok(b.clone()),
        }
    }
}

/// One feature file and manifest extracted with one backbone. Entries that
/// share `name` but differ in backbone form one table row group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub features: PathBuf,
    pub manifest: PathBuf,
    pub backbone: BackboneSpec,
}

/// A learner configuration with an optional display name, needed when the
/// same kind appears twice (e.g. two learning rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub config: LearnerConfig,
}

impl LearnerEntry {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.config.label())
    }
}

impl From<LearnerConfig> for LearnerEntry {
    fn from(config: LearnerConfig) -> Self {
        Self { name: None, config }
    }
}

/// Which plan checkpoints get evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    /// Final checkpoint only for iid and class-iid, every checkpoint
    /// otherwise.
    #[default]
    Auto,
    All,
    FinalOnly,
}

impl CheckpointPolicy {
    pub fn final_only_for(self, kind: OrderingKind) -> bool {
        match self {
            CheckpointPolicy::Auto => matches!(kind, OrderingKind::Iid | OrderingKind::ClassIid),
            CheckpointPolicy::All => false,
            CheckpointPolicy::FinalOnly => true,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    pub learners: Vec<LearnerEntry>,
    pub orderings: Vec<OrderingConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Mixed into every run seed.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub checkpoints: CheckpointPolicy,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Parallel cells; `None` uses every core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub netscore: NetScoreParams,
}

impl ExperimentConfig {
    /// Reads a config and resolves its relative paths against the config
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            join(&mut d.features);
            join(&mut d.manifest);
        }
        join(&mut self.output_dir);
    }

    /// Checks names, seeds and file existence.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.learners.is_empty() || self.orderings.is_empty() {
            return Err(Error::Config(
                "datasets, learners and orderings must be nonempty".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        let mut seen = BTreeSet::new();
        for d in &self.datasets {
            let b = d.backbone.resolve()?;
            if !seen.insert((d.name.clone(), b.name.clone())) {
                return Err(Error::Config(format!(
                    "dataset {:?} with backbone {:?} listed twice",
                    d.name, b.name
                )));
            }
            for p in [&d.features, &d.manifest] {
                if !p.exists() {
                    return Err(Error::Config(format!("missing file {}", p.display())));
                }
            }
        }
        let mut labels = BTreeSet::new();
        for l in &self.learners {
            if !labels.insert(l.label()) {
                return Err(Error::Config(format!(
                    "learner label {:?} is ambiguous; give the entries distinct names",
                    l.label()
                )));
            }
        }
        let mut orderings = BTreeSet::new();
        for o in &self.orderings {
            if !orderings.insert(o.label()) {
                return Err(Error::Config(format!(
                    "ordering {:?} listed twice",
                    o.label()
                )));
            }
        }
        Ok(())
    }
}

/// A dataset loaded into memory with its resolved backbone.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub backbone: BackboneConstant,
    pub data: Dataset,
}

impl LoadedDataset {
    pub fn new(name: impl Into<String>, backbone: BackboneConstant, data: Dataset) -> Result<Self> {
        backbone.check_dim(data.dim())?;
        Ok(Self {
            name: name.into(),
            backbone,
            data,
        })
    }

    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        Self::new(
            spec.name.clone(),
            spec.backbone.resolve()?,
            Dataset::open(&spec.features, &spec.manifest)?,
        )
    }
}
