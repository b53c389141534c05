//! Benchmark harness: declarative TOML configs in, a deterministic report
//! with per-cell metrics, aggregates, and significance tests out.
//!
//! A run is a grid of (session, model, horizon) cells. Sessions come from
//! CSV columns or synthetic generators, models from a fixed inventory of
//! forecasters, and every stochastic model is replicated across seeds
//! derived from the single global seed. Failures are recorded per cell
//! rather than aborting the grid.

pub mod config;
pub mod ingest;
pub mod report;
pub mod run;

pub use config::{BenchmarkConfig, ModelSpec, SelectionKind, SessionSpec};
pub use ingest::ingest_csv;
pub use report::{emit_reports, load_report, BenchmarkReport};
pub use run::{run_benchmark, threshold_crossing, RunArtifacts, LOSS_THRESHOLD};
