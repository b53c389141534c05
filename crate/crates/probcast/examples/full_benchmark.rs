//! A complete benchmark run from an in-code config: two synthetic
//! sessions, four model families, two horizons, reports emitted to a
//! temporary directory. The same config as TOML drives the CLI.

use probcast::harness::{emit_reports, run_benchmark, BenchmarkConfig};

const CONFIG: &str = r#"
global_seed = 7
horizons = [18, 35]
n_seeds = 3

[[sessions]]
id = "persistent"
[sessions.generator]
kind = "ar"
coefficients = [0.9]
noise_std = 1.0
length = 1500
seed = 1

[[sessions]]
id = "drifting"
[sessions.generator]
kind = "random_walk"
noise_std = 0.5
length = 1500
seed = 2

[[models]]
kind = "naive"

[[models]]
kind = "average"

[[models]]
kind = "ar"
selection = "valql"

[[models]]
kind = "theta"
"#;

fn main() -> Result<(), probcast::error::Error> {
    let config = BenchmarkConfig::from_toml(CONFIG)?;
    let artifacts = run_benchmark(&config)?;
    let report = &artifacts.report;

    println!(
        "{} cells, {} failures, config {}",
        report.cells.len(),
        report.failures.len(),
        &report.config_hash[..12]
    );
    println!("\nmodel        horizon  mwql    vs naive");
    for agg in &report.aggregates {
        let rel = report
            .relative_mwql
            .iter()
            .find(|r| r.model == agg.model && r.horizon == agg.horizon)
            .and_then(|r| r.mean);
        println!(
            "{:<12} {:>7}  {:.4}  {}",
            agg.model,
            agg.horizon,
            agg.mwql_mean.unwrap(),
            rel.map_or_else(|| "-".into(), |v| format!("{v:.3}")),
        );
    }
    for cell in &report.cells {
        if let Some(crossing) = &cell.threshold_crossing {
            println!(
                "{} {} h={} crosses the average-loss threshold at step {} ({:.2}s)",
                cell.session, cell.model, cell.horizon, crossing.step, crossing.seconds
            );
        }
    }

    let outdir = std::env::temp_dir().join("probcast-example-out");
    let files = emit_reports(&artifacts, &outdir)?;
    println!("\nwrote {} files under {}", files.len(), outdir.display());
    Ok(())
}
