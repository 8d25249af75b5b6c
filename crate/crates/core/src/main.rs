use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use streamcl::feature_store::{
    build_dataset, synthesize_gaussian_dataset, Dataset, LabeledSample, Manifest, SynthConfig,
};
use streamcl::harness::{aggregate, run_matrix, write_tables, ExperimentConfig};
use streamcl::metrics::{netscore, ExperimentRecord, NetScoreParams};

#[derive(Parser)]
#[command(
    name = "streamcl",
    version,
    about = "Online continual learning benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded Gaussian class-mixture dataset.
    Synth {
        /// JSON file with generator settings; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        train_per_class: Option<usize>,
        #[arg(long)]
        test_per_class: Option<usize>,
        #[arg(long)]
        shared_mean_norm: Option<f64>,
        /// Directory receiving features.oclf and manifest.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a feature file and manifest, optionally rewriting them.
    ///
    /// A `.csv` feature file (one row of numbers per sample, no header) is
    /// converted to the binary container.
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write normalized copies to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute the experiment matrix described by a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Recompute cells that already have results.
        #[arg(long)]
        force: bool,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute NetScore from a triplet or for every record in a file.
    Netscore(NetscoreArgs),
    /// Rebuild aggregate tables from a records file.
    Aggregate {
        #[arg(long)]
        records: PathBuf,
        /// Write the tables under `<out>/tables`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct NetscoreArgs {
    /// Accuracy in percent.
    #[arg(long, required_unless_present = "records")]
    accuracy: Option<f64>,
    #[arg(long, required_unless_present = "records")]
    params: Option<f64>,
    #[arg(long, required_unless_present = "records")]
    seconds: Option<f64>,
    /// JSONL records to score instead of a single triplet.
    #[arg(long, conflicts_with_all = ["accuracy", "params", "seconds"])]
    records: Option<PathBuf>,
    /// Use the square-root penalties (beta = gamma = 0.5).
    #[arg(long)]
    original: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
}

impl NetscoreArgs {
    fn params(&self) -> NetScoreParams {
        let base = if self.original {
            NetScoreParams::ORIGINAL
        } else {
            NetScoreParams::DEFAULT
        };
        NetScoreParams {
            alpha: self.alpha.unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(base.beta),
            gamma: self.gamma.unwrap_or(base.gamma),
            scale: self.scale.unwrap_or(base.scale),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            classes,
            dim,
            train_per_class,
            test_per_class,
            shared_mean_norm,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text)?
                }
                None => SynthConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.classes = classes.unwrap_or(cfg.classes);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.train_per_class = train_per_class.unwrap_or(cfg.train_per_class);
            cfg.test_per_class = test_per_class.unwrap_or(cfg.test_per_class);
            cfg.shared_mean_norm = shared_mean_norm.unwrap_or(cfg.shared_mean_norm);
            let (ds, _) = synthesize_gaussian_dataset(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let header = ds.write(out.join("features.oclf"), out.join("manifest.csv"))?;
            println!(
                "wrote {} samples x {} dims, {} classes to {}",
                header.n_samples,
                header.dim,
                ds.num_classes(),
                out.display()
            );
        }
        Command::Ingest {
            features,
            manifest,
            out,
        } => {
            let ds = if features.extension().is_some_and(|e| e == "csv") {
                dataset_from_csv(&features, &manifest)?
            } else {
                Dataset::open(&features, &manifest)?
            };
            let m = ds.manifest();
            println!(
                "ok: {} samples ({} train, {} test), dim {}, {} classes",
                m.len(),
                m.train().count(),
                m.test().count(),
                ds.dim(),
                ds.num_classes()
            );
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                ds.write(out.join("features.oclf"), out.join("manifest.csv"))?;
                println!("wrote {}", out.display());
            }
        }
        Command::Run {
            config,
            workers,
            seed,
            force,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = Some(w);
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outcome = run_matrix(&cfg, force)?;
            print!("{}", outcome.tables.render());
            println!(
                "\n{} computed, {} reused, {} failed; results in {}",
                outcome.computed,
                outcome.skipped,
                outcome.failures.len(),
                cfg.output_dir.display()
            );
            for f in &outcome.failures {
                eprintln!("failed: {}: {}", f.cell, f.error);
            }
            if !outcome.success() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Netscore(args) => {
            let np = args.params();
            match &args.records {
                Some(path) => {
                    for r in ExperimentRecord::read_jsonl_file(path)? {
                        let v =
                            netscore(r.final_accuracy, r.param_count as f64, r.wall_seconds, np);
                        let shown = v.map_or_else(|e| format!("n/a ({e})"), |v| format!("{v:.2}"));
                        println!(
                            "{} {} {} seed={} {}",
                            r.dataset, r.learner, r.ordering, r.seed, shown
                        );
                    }
                }
                None => {
                    let (Some(a), Some(p), Some(c)) = (args.accuracy, args.params, args.seconds)
                    else {
                        bail!("need --accuracy, --params and --seconds, or --records");
                    };
                    println!("{:.4}", netscore(a, p, c, np)?);
                }
            }
        }
        Command::Aggregate { records, out } => {
            let recs = ExperimentRecord::read_jsonl_file(&records)?;
            let tables = aggregate(&recs);
            print!("{}", tables.render());
            if let Some(out) = out {
                write_tables(&out, &tables)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Pairs headerless numeric CSV rows with a manifest whose `row_index`
/// values refer to those rows.
fn dataset_from_csv(features: &Path, manifest: &Path) -> anyhow::Result<Dataset> {
    let manifest = Manifest::read(manifest)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(features)
        .with_context(|| format!("reading {}", features.display()))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("row {} of {}", rows.len(), features.display()))?;
        rows.push(row);
    }
    let dim = rows.first().map_or(0, Vec::len);
    let mut samples = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        let row = rows
            .get(r.row_index as usize)
            .with_context(|| format!("row_index {} beyond {} csv rows", r.row_index, rows.len()))?;
        samples.push(LabeledSample {
            features: row.clone(),
            class_id: r.class_id,
            split: r.split,
            group_id: r.group_id,
        });
    }
    // Sample ids are renumbered in manifest order by `build_dataset`; keep
    // the originals.
    let ds = build_dataset(dim, &samples)?;
    let records = ds
        .manifest()
        .records()
        .iter()
        .zip(manifest.records())
        .map(|(new, old)| streamcl::feature_store::ManifestRecord {
            sample_id: old.sample_id,
            ..*new
        })
        .collect();
    Ok(Dataset::new(
        ds.features().clone(),
        Manifest::new(records)?,
    )?)
}
