//! Seeded arrangements of a training manifest into presentation streams.
//!
//! Every plan is a pure function of the manifest, its parameters and a
//! seed. Classes and groups are put in ascending id order before any
//! shuffle, and all randomness goes through [`crate::rng`], so a plan can be
//! regenerated anywhere the generator is reimplemented.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{Manifest, ManifestRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    Iid,
    ClassIid,
    Instance,
    LowShotInstance,
    KShotClassIid,
}

impl OrderingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderingKind::Iid => "iid",
            OrderingKind::ClassIid => "class_iid",
            OrderingKind::Instance => "instance",
            OrderingKind::LowShotInstance => "low_shot_instance",
            OrderingKind::KShotClassIid => "k_shot_class_iid",
        }
    }
}

/// An evaluation point: after `position` samples have been presented,
/// score the test samples of `seen_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub position: usize,
    pub seen_classes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingPlan {
    pub kind: OrderingKind,
    pub seed: u64,
    /// Shot count for k-shot plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Train sample ids in presentation order.
    pub sequence: Vec<u64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Sample ids to evaluate on instead of the test split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_pool: Option<Vec<u64>>,
}

impl OrderingPlan {
    /// The same plan with only its last checkpoint.
    pub fn final_only(mut self) -> Self {
        if let Some(last) = self.checkpoints.pop() {
            self.checkpoints = vec![last];
        }
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Ordering selection as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderingConfig {
    Iid,
    ClassIid,
    Instance,
    LowShotInstance,
    KShotClassIid { k: usize },
}

impl OrderingConfig {
    pub fn kind(&self) -> OrderingKind {
        match self {
            OrderingConfig::Iid => OrderingKind::Iid,
            OrderingConfig::ClassIid => OrderingKind::ClassIid,
            OrderingConfig::Instance => OrderingKind::Instance,
            OrderingConfig::LowShotInstance => OrderingKind::LowShotInstance,
            OrderingConfig::KShotClassIid { .. } => OrderingKind::KShotClassIid,
        }
    }

    /// Identifier used in records, e.g. `k_shot_class_iid_5`.
    pub fn label(&self) -> String {
        match self {
            OrderingConfig::KShotClassIid { k } => format!("k_shot_class_iid_{k}"),
            other => other.kind().as_str().to_string(),
        }
    }

    pub fn make(&self, manifest: &Manifest, seed: u64) -> Result<OrderingPlan> {
        match *self {
            OrderingConfig::Iid => make_iid(manifest, seed),
            OrderingConfig::ClassIid => make_class_iid(manifest, seed),
            OrderingConfig::Instance => make_instance(manifest, seed),
            OrderingConfig::LowShotInstance => make_low_shot_instance(manifest, seed),
            OrderingConfig::KShotClassIid { k } => make_k_shot_class_iid(manifest, k, seed),
        }
    }
}

/// Train sample ids per class, each list in ascending id order.
fn train_by_class(manifest: &Manifest) -> Result<BTreeMap<u32, Vec<u64>>> {
    let mut by_class: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for r in manifest.train() {
        by_class.entry(r.class_id).or_default().push(r.sample_id);
    }
    if by_class.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    for ids in by_class.values_mut() {
        ids.sort_unstable();
    }
    Ok(by_class)
}

fn final_checkpoint(sequence: &[u64], classes: impl IntoIterator<Item = u32>) -> Checkpoint {
    Checkpoint {
        position: sequence.len(),
        seen_classes: classes
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    }
}

/// Appends `block` and records a checkpoint covering `class` and everything
/// seen before it.
fn push_block(
    sequence: &mut Vec<u64>,
    checkpoints: &mut Vec<Checkpoint>,
    seen: &mut BTreeSet<u32>,
    class: u32,
    block: impl IntoIterator<Item = u64>,
) {
    sequence.extend(block);
    seen.insert(class);
    checkpoints.push(Checkpoint {
        position: sequence.len(),
        seen_classes: seen.iter().copied().collect(),
    });
}

/// Every train sample in one uniform shuffle.
pub fn make_iid(manifest: &Manifest, seed: u64) -> Result<OrderingPlan> {
    let by_class = train_by_class(manifest)?;
    let mut sequence: Vec<u64> = manifest.train().map(|r| r.sample_id).collect();
    sequence.sort_unstable();
    rng::shuffle(&mut rng::seeded(seed), &mut sequence);
    let checkpoints = vec![final_checkpoint(&sequence, by_class.keys().copied())];
    Ok(OrderingPlan {
        kind: OrderingKind::Iid,
        seed,
        k: None,
        sequence,
        checkpoints,
        eval_pool: None,
    })
}

/// Classes in shuffled order, each class's samples shuffled within its
/// block; a checkpoint closes every block. Use [`OrderingPlan::final_only`]
/// to keep just the last one.
pub fn make_class_iid(manifest: &Manifest, seed: u64) -> Result<OrderingPlan> {
    let by_class = train_by_class(manifest)?;
    let mut rng = rng::seeded(seed);
    let mut classes: Vec<u32> = by_class.keys().copied().collect();
    rng::shuffle(&mut rng, &mut classes);
    let mut sequence = Vec::new();
    let mut checkpoints = Vec::with_capacity(classes.len());
    let mut seen = BTreeSet::new();
    for class in classes {
        let mut block = by_class[&class].clone();
        rng::shuffle(&mut rng, &mut block);
        push_block(&mut sequence, &mut checkpoints, &mut seen, class, block);
    }
    Ok(OrderingPlan {
        kind: OrderingKind::ClassIid,
        seed,
        k: None,
        sequence,
        checkpoints,
        eval_pool: None,
    })
}

struct Group {
    class: u32,
    frames: Vec<u64>,
}

/// Train groups keyed by id; frames keep manifest order.
fn train_groups<'a>(
    records: impl Iterator<Item = &'a ManifestRecord>,
) -> Result<BTreeMap<u64, Group>> {
    let mut groups: BTreeMap<u64, Group> = BTreeMap::new();
    for r in records {
        let g = r.group_id.ok_or(Error::MissingGroup(r.sample_id))?;
        let entry = groups.entry(g).or_insert_with(|| Group {
            class: r.class_id,
            frames: Vec::new(),
        });
        if entry.class != r.class_id {
            return Err(Error::Manifest(format!(
                "group {g} mixes classes {} and {}",
                entry.class, r.class_id
            )));
        }
        entry.frames.push(r.sample_id);
    }
    Ok(groups)
}

/// Whole groups (videos) in shuffled order, frames in stored order.
pub fn make_instance(manifest: &Manifest, seed: u64) -> Result<OrderingPlan> {
    let by_class = train_by_class(manifest)?;
    let groups = train_groups(manifest.train())?;
    let mut order: Vec<u64> = groups.keys().copied().collect();
    rng::shuffle(&mut rng::seeded(seed), &mut order);
    let sequence: Vec<u64> = order
        .iter()
        .flat_map(|g| groups[g].frames.iter().copied())
        .collect();
    let checkpoints = vec![final_checkpoint(&sequence, by_class.keys().copied())];
    Ok(OrderingPlan {
        kind: OrderingKind::Instance,
        seed,
        k: None,
        sequence,
        checkpoints,
        eval_pool: None,
    })
}

/// One uniformly chosen group per class, classes in shuffled order, with a
/// checkpoint after each group. Ungrouped train samples are ignored; a
/// class with no group at all is an error.
pub fn make_low_shot_instance(manifest: &Manifest, seed: u64) -> Result<OrderingPlan> {
    let by_class = train_by_class(manifest)?;
    let groups = train_groups(manifest.train().filter(|r| r.group_id.is_some()))?;
    let mut groups_of: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for (&g, group) in &groups {
        groups_of.entry(group.class).or_default().push(g);
    }
    for (class, ids) in &by_class {
        if !groups_of.contains_key(class) {
            return Err(Error::MissingGroup(ids[0]));
        }
    }

    let mut rng = rng::seeded(seed);
    let mut classes: Vec<u32> = groups_of.keys().copied().collect();
    rng::shuffle(&mut rng, &mut classes);
    let mut sequence = Vec::new();
    let mut checkpoints = Vec::with_capacity(classes.len());
    let mut seen = BTreeSet::new();
    for class in classes {
        let candidates = &groups_of[&class];
        let g = candidates[rng::below_usize(&mut rng, candidates.len())];
        let frames = groups[&g].frames.iter().copied();
        push_block(&mut sequence, &mut checkpoints, &mut seen, class, frames);
    }
    Ok(OrderingPlan {
        kind: OrderingKind::LowShotInstance,
        seed,
        k: None,
        sequence,
        checkpoints,
        eval_pool: None,
    })
}

/// `k` uniformly chosen train samples per class, arranged class-iid. The
/// unchosen train samples become the plan's evaluation pool.
pub fn make_k_shot_class_iid(manifest: &Manifest, k: usize, seed: u64) -> Result<OrderingPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-shot needs k >= 1".into()));
    }
    let by_class = train_by_class(manifest)?;
    for (&class, ids) in &by_class {
        if ids.len() < k + 1 {
            return Err(Error::InsufficientSamples {
                class,
                available: ids.len(),
                required: k + 1,
            });
        }
    }

    let mut rng = rng::seeded(seed);
    let mut chosen: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    let mut eval_pool = Vec::new();
    for (&class, ids) in &by_class {
        let picks = rng::sample_indices(&mut rng, ids.len(), k);
        let picked: BTreeSet<usize> = picks.iter().copied().collect();
        chosen.insert(class, picks.iter().map(|&i| ids[i]).collect());
        eval_pool.extend(
            ids.iter()
                .enumerate()
                .filter(|(i, _)| !picked.contains(i))
                .map(|(_, &id)| id),
        );
    }

    let mut classes: Vec<u32> = chosen.keys().copied().collect();
    rng::shuffle(&mut rng, &mut classes);
    let mut sequence = Vec::with_capacity(k * classes.len());
    let mut checkpoints = Vec::with_capacity(classes.len());
    let mut seen = BTreeSet::new();
    for class in classes {
        let mut block = chosen[&class].clone();
        rng::shuffle(&mut rng, &mut block);
        push_block(&mut sequence, &mut checkpoints, &mut seen, class, block);
    }
    eval_pool.sort_unstable();
    Ok(OrderingPlan {
        kind: OrderingKind::KShotClassIid,
        seed,
        k: Some(k),
        sequence,
        checkpoints,
        eval_pool: Some(eval_pool),
    })
}
