use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CheckpointPolicy, ExperimentConfig, LearnerEntry, LoadedDataset};
use super::tables::{aggregate, Tables};
use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::metrics::{self, CurvePoint, ExperimentRecord, LabeledPool, NetScoreParams};
use crate::rng;
use crate::stream_orderings::OrderingConfig;

/// Settings shared by every cell of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub base_seed: u64,
    pub checkpoints: CheckpointPolicy,
    pub netscore: NetScoreParams,
}

impl RunOptions {
    /// Seed for the ordering plan of run `seed`.
    pub fn plan_seed(&self, seed: u64) -> u64 {
        rng::compose_seed(self.base_seed, seed)
    }

    /// Seed for the learner's own randomness (replay sampling) in run `seed`.
    pub fn learner_seed(&self, seed: u64) -> u64 {
        rng::compose_seed(self.plan_seed(seed), 1)
    }
}

/// Stable identifier of a cell, safe to use as a file stem.
pub fn cell_id(dataset: &str, backbone: &str, learner: &str, ordering: &str, seed: u64) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    };
    format!(
        "{}__{}__{}__{}__s{seed}",
        clean(dataset),
        clean(backbone),
        clean(learner),
        clean(ordering)
    )
}

/// Streams one plan through a fresh learner, evaluating at the plan's
/// checkpoints. Everything except the timing fields is a function of the
/// inputs.
pub fn run_cell(
    ds: &LoadedDataset,
    learner: &LearnerEntry,
    ordering: &OrderingConfig,
    seed: u64,
    opts: &RunOptions,
) -> Result<ExperimentRecord> {
    let label = learner.label();
    let ordering_label = ordering.label();
    run_cell_inner(ds, learner, &label, ordering, &ordering_label, seed, opts).map_err(|e| {
        Error::Cell {
            cell: cell_id(&ds.name, &ds.backbone.name, &label, &ordering_label, seed),
            source: Box::new(e),
        }
    })
}

fn run_cell_inner(
    ds: &LoadedDataset,
    learner_entry: &LearnerEntry,
    label: &str,
    ordering: &OrderingConfig,
    ordering_label: &str,
    seed: u64,
    opts: &RunOptions,
) -> Result<ExperimentRecord> {
    let manifest = ds.data.manifest();
    let mut plan = ordering.make(manifest, opts.plan_seed(seed))?;
    if opts.checkpoints.final_only_for(plan.kind) {
        plan = plan.final_only();
    }
    let num_classes = manifest.num_classes();
    let mut learner =
        learner_entry
            .config
            .build(num_classes, ds.data.dim(), opts.learner_seed(seed))?;

    let eval_start = Instant::now();
    let pool = match &plan.eval_pool {
        Some(ids) => LabeledPool::from_samples(&ds.data, ids.iter().copied())?,
        None => LabeledPool::test_split(&ds.data)?,
    };
    let mut eval_seconds = eval_start.elapsed().as_secs_f64();
    let mut train_seconds = 0.0;

    let mut curve = Vec::with_capacity(plan.checkpoints.len());
    let mut next = 0;
    for (i, cp) in plan.checkpoints.iter().enumerate() {
        let t = Instant::now();
        for &id in &plan.sequence[next..cp.position] {
            let (x, y) = ds.data.sample(id)?;
            learner.fit_one(&x, y)?;
        }
        next = cp.position;
        train_seconds += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let accuracy = metrics::evaluate(&learner, &pool, Some(&cp.seen_classes))?;
        eval_seconds += t.elapsed().as_secs_f64();
        curve.push(CurvePoint {
            checkpoint: i,
            position: cp.position,
            seen_classes: cp.seen_classes.len(),
            accuracy,
        });
    }

    let final_accuracy = curve
        .last()
        .map(|c| c.accuracy)
        .ok_or_else(|| Error::InvalidArgument("ordering plan has no checkpoints".into()))?;
    let wall_seconds = train_seconds + eval_seconds;
    let param_count = ds.backbone.param_count + learner.stored_scalars();
    let netscore = metrics::netscore(
        final_accuracy,
        param_count as f64,
        wall_seconds,
        opts.netscore,
    )
    .ok();
    Ok(ExperimentRecord {
        dataset: ds.name.clone(),
        learner: label.to_string(),
        learner_config: learner_entry.config.clone(),
        ordering: ordering_label.to_string(),
        backbone: ds.backbone.clone(),
        seed,
        num_classes,
        final_accuracy,
        curve,
        wall_seconds,
        train_seconds,
        eval_seconds,
        param_count,
        netscore,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutcome {
    /// One record per successful cell, in matrix order, whether computed
    /// now or loaded from an earlier run.
    pub records: Vec<ExperimentRecord>,
    pub computed: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
    pub tables: Tables,
}

impl MatrixOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per-cell result files under `<out>/cells`. The first run of a cell
/// writes `<id>.json`; forced reruns write `<id>.run2.json`, `.run3`, and so
/// on. Nothing is overwritten.
#[derive(Debug, Clone)]
pub struct CellStore {
    dir: PathBuf,
}

impl CellStore {
    pub fn new(out: &Path) -> Result<Self> {
        let dir = out.join("cells");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    fn path(&self, id: &str, run: usize) -> PathBuf {
        if run == 1 {
            self.dir.join(format!("{id}.json"))
        } else {
            self.dir.join(format!("{id}.run{run}.json"))
        }
    }

    /// Highest existing run number of `id`, 0 if none.
    pub fn latest_run(&self, id: &str) -> usize {
        let mut run = 0;
        while self.path(id, run + 1).exists() {
            run += 1;
        }
        run
    }

    pub fn load_latest(&self, id: &str) -> Result<Option<ExperimentRecord>> {
        match self.latest_run(id) {
            0 => Ok(None),
            n => {
                let p = self.path(id, n);
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                Ok(Some(serde_json::from_str(&text)?))
            }
        }
    }

    /// Writes a new run file and returns its path.
    pub fn save(&self, id: &str, record: &ExperimentRecord) -> Result<PathBuf> {
        let p = self.path(id, self.latest_run(id) + 1);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&p)
            .map_err(|e| Error::io(&p, e))?;
        serde_json::to_writer_pretty(&mut f, record)?;
        Ok(p)
    }
}

fn append(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Appends records to `records.jsonl` and `records.csv` under `out`.
pub fn append_records(out: &Path, records: &[ExperimentRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let mut jsonl = Vec::new();
    ExperimentRecord::write_jsonl(records, &mut jsonl)?;
    append(&out.join("records.jsonl"), &jsonl)?;

    let csv_path = out.join("records.csv");
    let mut csv = Vec::new();
    ExperimentRecord::write_csv(records, &mut csv)?;
    if csv_path.exists() {
        // Drop the header line when appending.
        let body = csv
            .iter()
            .position(|&b| b == b'\n')
            .map_or(&csv[..0], |i| &csv[i + 1..]);
        append(&csv_path, body)
    } else {
        append(&csv_path, &csv)
    }
}

/// Writes the aggregate tables under `<out>/tables`, replacing earlier
/// versions (they are derived from the append-only records).
pub fn write_tables(out: &Path, tables: &Tables) -> Result<()> {
    let dir = out.join("tables");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).map_err(|e| Error::io(&p, e))
    };
    tables.write_seed_means_csv(create("seed_means.csv")?)?;
    tables.write_backbone_csv(create("by_backbone.csv")?)?;
    tables.write_ordering_csv(create("by_ordering.csv")?)?;
    Ok(())
}

struct CellJob<'a> {
    ds: &'a LoadedDataset,
    learner: &'a LearnerEntry,
    ordering: &'a OrderingConfig,
    seed: u64,
    id: String,
}

enum CellResult {
    Computed(ExperimentRecord),
    Skipped(ExperimentRecord),
    Failed(CellFailure),
}

/// Runs every (dataset, learner, ordering, seed) cell of `cfg` in parallel.
///
/// Completed cells found on disk are reused unless `force` is set. Cell
/// failures are collected rather than aborting the matrix. Returns `Err`
/// only for problems that prevent running at all (bad config, unreadable
/// dataset, unwritable output directory).
pub fn run_matrix(cfg: &ExperimentConfig, force: bool) -> Result<MatrixOutcome> {
    cfg.validate()?;
    let datasets: Vec<LoadedDataset> = cfg
        .datasets
        .iter()
        .map(LoadedDataset::load)
        .collect::<Result<_>>()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let store = CellStore::new(out)?;
    let opts = RunOptions {
        base_seed: cfg.base_seed,
        checkpoints: cfg.checkpoints,
        netscore: cfg.netscore,
    };

    let mut jobs = Vec::new();
    for ds in &datasets {
        for learner in &cfg.learners {
            for ordering in &cfg.orderings {
                for &seed in &cfg.seeds {
                    let id = cell_id(
                        &ds.name,
                        &ds.backbone.name,
                        &learner.label(),
                        &ordering.label(),
                        seed,
                    );
                    jobs.push(CellJob {
                        ds,
                        learner,
                        ordering,
                        seed,
                        id,
                    });
                }
            }
        }
    }

    let work = |job: &CellJob| -> CellResult {
        if !force {
            match store.load_latest(&job.id) {
                Ok(Some(r)) => return CellResult::Skipped(r),
                Ok(None) => {}
                Err(e) => {
                    return CellResult::Failed(CellFailure {
                        cell: job.id.clone(),
                        error: format!("unreadable stored result: {e}"),
                    })
                }
            }
        }
        let result = run_cell(job.ds, job.learner, job.ordering, job.seed, &opts)
            .and_then(|r| store.save(&job.id, &r).map(|_| r));
        match result {
            Ok(r) => CellResult::Computed(r),
            Err(e) => CellResult::Failed(CellFailure {
                cell: job.id.clone(),
                error: e.to_string(),
            }),
        }
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.workers {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
    };
    let results: Vec<CellResult> = pool.install(|| jobs.par_iter().map(work).collect());

    let mut outcome = MatrixOutcome::default();
    let mut fresh = Vec::new();
    for r in results {
        match r {
            CellResult::Computed(r) => {
                outcome.computed += 1;
                fresh.push(r.clone());
                outcome.records.push(r);
            }
            CellResult::Skipped(r) => {
                outcome.skipped += 1;
                outcome.records.push(r);
            }
            CellResult::Failed(f) => outcome.failures.push(f),
        }
    }
    append_records(out, &fresh)?;
    if !outcome.failures.is_empty() {
        let mut buf = Vec::new();
        for f in &outcome.failures {
            serde_json::to_writer(&mut buf, f)?;
            buf.push(b'\n');
        }
        append(&out.join("failures.jsonl"), &buf)?;
    }
    outcome.tables = aggregate(&outcome.records);
    write_tables(out, &outcome.tables)?;
    Ok(outcome)
}
