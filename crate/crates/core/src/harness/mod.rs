//! Experiment configuration, the (dataset x learner x ordering x seed)
//! matrix runner, result persistence and aggregate tables.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! cells/<cell-id>.json        one record per completed cell (reruns add .runN)
//! records.jsonl, records.csv  append-only logs of newly computed records
//! failures.jsonl              append-only log of failed cells
//! tables/*.csv                seed means, per-backbone and per-ordering tables
//! ```

mod config;
mod run;
mod tables;

pub use config::{
    BackboneSpec, CheckpointPolicy, DatasetSpec, ExperimentConfig, LearnerEntry, LoadedDataset,
};
pub use run::{
    append_records, cell_id, run_cell, run_matrix, write_tables, CellFailure, CellStore,
    MatrixOutcome, RunOptions,
};
pub use tables::{aggregate, BackboneRow, OrderRow, SeedMean, Tables};
