//! Command-line front end: generate synthetic CSV fixtures, sanity-check
//! input files, run a benchmark config, or summarize an emitted report.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 run finished
//! with recorded cell failures.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use probcast::error::{Error, Result};
use probcast::harness::{emit_reports, ingest_csv, load_report, run_benchmark, BenchmarkConfig};
use probcast::synth::{generate, GeneratorSpec};

#[derive(Parser)]
#[command(
    name = "probcast",
    version,
    about = "Probabilistic forecasting benchmark for univariate time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic series from a TOML spec and write them as CSV.
    Generate {
        /// TOML file holding one generator spec or a [[series]] list
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit a leading time column with this header
        #[arg(long)]
        time_column: Option<String>,
        /// Sampling rate in Hz for the time column
        #[arg(long, default_value_t = 35.0)]
        rate: f64,
    },
    /// Parse a CSV file and report the series it contains.
    IngestCheck {
        /// CSV file with one column per series
        #[arg(long)]
        csv: PathBuf,
        /// Column holding timestamps; validated for uniform spacing
        #[arg(long)]
        time_column: Option<String>,
        /// Sampling rate assumed when no time column is given
        #[arg(long, default_value_t = 35.0)]
        rate: f64,
    },
    /// Run the benchmark described by a TOML config and emit reports.
    Run {
        /// Benchmark config file
        #[arg(long)]
        config: PathBuf,
        /// Override the global seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the horizon list, comma separated
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Override the number of seed replicates
        #[arg(long)]
        n_seeds: Option<usize>,
    },
    /// Print a summary of an emitted JSON report.
    Report {
        /// Path to a report.json produced by `run`
        #[arg(long)]
        report: PathBuf,
    },
}

/// Spec file for `generate`: either a bare generator spec or a list.
#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Many { series: Vec<GeneratorSpec> },
    One(GeneratorSpec),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate {
            spec,
            out,
            time_column,
            rate,
        } => cmd_generate(&spec, out.as_deref(), time_column.as_deref(), rate),
        Command::IngestCheck {
            csv,
            time_column,
            rate,
        } => cmd_ingest_check(&csv, time_column.as_deref(), rate),
        Command::Run {
            config,
            seed,
            out,
            horizons,
            n_seeds,
        } => cmd_run(&config, seed, out, horizons, n_seeds),
        Command::Report { report } => cmd_report(&report),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: format!("cannot read: {e}"),
    })
}

fn cmd_generate(
    spec_path: &Path,
    out: Option<&Path>,
    time_column: Option<&str>,
    rate: f64,
) -> Result<i32> {
    if rate <= 0.0 || !rate.is_finite() {
        return Err(Error::Config {
            reason: format!("sampling rate must be positive, got {rate}"),
        });
    }
    let text = read_text(spec_path)?;
    let parsed: SpecFile = toml::from_str(&text).map_err(|e| Error::Config {
        reason: format!("{}: {e}", spec_path.display()),
    })?;
    let specs = match parsed {
        SpecFile::Many { series } => series,
        SpecFile::One(spec) => vec![spec],
    };
    if specs.is_empty() {
        return Err(Error::Config {
            reason: "spec file lists no series".into(),
        });
    }

    let mut columns = Vec::new();
    for spec in &specs {
        columns.push(generate(spec)?);
    }
    let rows = columns[0].len();
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Config {
            reason: "all series in one CSV must have equal length".into(),
        });
    }

    let mut csv = String::new();
    let mut header: Vec<String> = Vec::new();
    if let Some(name) = time_column {
        header.push(name.to_string());
    }
    header.extend(columns.iter().map(|c| c.id().to_string()));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for row in 0..rows {
        let mut cells: Vec<String> = Vec::new();
        if time_column.is_some() {
            cells.push((row as f64 / rate).to_string());
        }
        cells.extend(columns.iter().map(|c| c.values()[row].to_string()));
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }

    match out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| Error::Data {
                path: path.to_path_buf(),
                reason: format!("cannot write: {e}"),
            })?;
            eprintln!(
                "wrote {} series x {} rows to {}",
                columns.len(),
                rows,
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_ingest_check(csv: &Path, time_column: Option<&str>, rate: f64) -> Result<i32> {
    let series = ingest_csv(csv, time_column, rate)?;
    for s in &series {
        println!(
            "id={} length={} sampling_rate={} duration_s={}",
            s.id(),
            s.len(),
            s.sampling_rate(),
            s.len() as f64 / s.sampling_rate()
        );
    }
    println!("ok: {} series", series.len());
    Ok(0)
}

fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    horizons: Option<Vec<usize>>,
    n_seeds: Option<usize>,
) -> Result<i32> {
    let mut config = BenchmarkConfig::from_toml(&read_text(config_path)?)?;
    if let Some(seed) = seed {
        config.global_seed = seed;
    }
    if let Some(out) = out {
        config.output_dir = out;
    }
    if let Some(horizons) = horizons {
        config.horizons = horizons;
    }
    if let Some(n_seeds) = n_seeds {
        config.n_seeds = n_seeds;
    }
    config.validate()?;

    let artifacts = run_benchmark(&config)?;
    let files = emit_reports(&artifacts, &config.output_dir)?;
    let report = &artifacts.report;
    eprintln!(
        "run complete: {} cells, {} failures, {} files in {}",
        report.cells.len(),
        report.failures.len(),
        files.len(),
        config.output_dir.display()
    );
    for failure in &report.failures {
        eprintln!(
            "failure: session={} model={} horizon={} seed={}: {}",
            failure.session,
            failure.model,
            failure
                .horizon
                .map_or_else(|| "-".into(), |h| h.to_string()),
            failure.seed.map_or_else(|| "-".into(), |s| s.to_string()),
            failure.error
        );
    }
    Ok(if report.failures.is_empty() { 0 } else { 4 })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn cmd_report(path: &Path) -> Result<i32> {
    let report = load_report(path)?;
    println!(
        "schema v{} | seed {} | config {} | generated {}",
        report.schema_version,
        report.global_seed,
        &report.config_hash[..12.min(report.config_hash.len())],
        report.generated_at
    );
    println!("sessions:");
    for s in &report.sessions {
        println!(
            "  {} length={} rate={} split={}|{}|{}",
            s.id, s.length, s.sampling_rate, s.split.train_end, s.split.val_end, s.split.test_end
        );
    }
    println!("aggregates (mean across sessions of per-session seed means):");
    println!("  {:<12} {:>7} {:>10} {:>10} {:>10} {:>10}", "model", "horizon", "mwql", "mwql_std", "msis", "mae");
    for row in &report.aggregates {
        println!(
            "  {:<12} {:>7} {:>10} {:>10} {:>10} {:>10}",
            row.model,
            row.horizon,
            fmt_opt(row.mwql_mean),
            fmt_opt(row.mwql_std),
            fmt_opt(row.msis_mean),
            fmt_opt(row.mae_mean)
        );
    }
    if !report.relative_mwql.is_empty() {
        println!("relative to naive:");
        for row in &report.relative_mwql {
            println!(
                "  {:<12} {:>7} {:>10}",
                row.model,
                row.horizon,
                fmt_opt(row.mean)
            );
        }
    }
    if !report.significance.is_empty() {
        println!("one-sided t vs {}:", report.significance[0].baseline);
        for row in &report.significance {
            println!(
                "  {:<12} {:>7} t={} p={:.4}{}",
                row.model,
                row.horizon,
                fmt_opt(row.t),
                row.p,
                if row.degenerate { " (degenerate)" } else { "" }
            );
        }
    }
    if !report.failures.is_empty() {
        println!("failures: {}", report.failures.len());
    }
    Ok(0)
}
