//! Report schema and file emission. The JSON layout is versioned; apart
//! from `generated_at`, two runs with the same config and seed must emit
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::config::BenchmarkConfig;
use crate::harness::run::RunArtifacts;
use crate::metrics::MetricReport;
use crate::neural::{save_checkpoint, trace_to_jsonl};
use crate::series::SplitIndices;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run produces, in one serializable tree. Collection order is
/// fixed (sessions, then models, then horizons as configured), so the
/// serialized form is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    /// Wall-clock assembly time; the one field allowed to differ between
    /// otherwise identical runs.
    pub generated_at: String,
    /// SHA-256 of the canonical JSON form of the effective config.
    pub config_hash: String,
    pub global_seed: u64,
    pub software_version: String,
    pub metadata: ReportMetadata,
    pub sessions: Vec<SessionSummary>,
    pub cells: Vec<CellResult>,
    pub failures: Vec<FailureRecord>,
    pub aggregates: Vec<AggregateRow>,
    /// Empty unless the naive model is part of the run.
    pub relative_mwql: Vec<RelativeRow>,
    /// Empty unless the validation-selected AR model is part of the run and
    /// at least two sessions completed.
    pub significance: Vec<SignificanceRow>,
}

/// Conventions that shape the numbers but are not themselves knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub session_aggregation: String,
    pub seed_aggregation: String,
    pub median_seed_rule: String,
    pub interval_alpha: f64,
    pub loss_threshold: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub length: usize,
    pub sampling_rate: f64,
    pub split: SplitIndices,
    /// Sample standard deviation of the training partition; the
    /// denominator of the uncertainty ratio.
    pub training_std: Option<f64>,
}

/// One (session, model, horizon) evaluation with all its seed replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub session: String,
    pub model: String,
    pub horizon: usize,
    /// Conditioning length actually used, after clipping to the data.
    pub history_length: usize,
    /// True for deterministic models, which run once regardless of n_seeds.
    pub seeds_collapsed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSummary>,
    pub seeds: Vec<SeedResult>,
    /// Seed whose aggregate weighted quantile loss is the (lower) median
    /// across replicates; curves and checkpoints come from this replicate.
    pub median_seed: u64,
    pub mean_mwql: Option<f64>,
    /// First step where this cell's median-seed per-step loss reaches 95%
    /// of the average baseline's, if both curves are fully defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_crossing: Option<CrossingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingPoint {
    pub step: usize,
    pub seconds: f64,
}

/// What a model's selection stage decided for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SelectionSummary {
    Order {
        p: usize,
        q: usize,
        criterion: String,
        models_tried: usize,
    },
    ThetaVariant {
        variant: String,
    },
    StateSpace {
        num_states: usize,
        num_lags: usize,
        fallback_argmax: bool,
    },
    Hyperparameters {
        chosen: BTreeMap<String, f64>,
        evaluated: usize,
    },
}

/// A cell or replicate that produced an error instead of metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub session: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub error: String,
}

/// Cross-session aggregate for one (model, horizon): std is taken across
/// seeds within each session, means are unweighted across sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub horizon: usize,
    pub n_sessions: usize,
    pub mwql_mean: Option<f64>,
    pub mwql_std: Option<f64>,
    pub msis_mean: Option<f64>,
    pub mae_mean: Option<f64>,
    pub mse_mean: Option<f64>,
    pub median_corr_mean: Option<f64>,
    pub crossing_rate_mean: Option<f64>,
}

/// Loss relative to the naive baseline, per seed within each session, then
/// aggregated like `AggregateRow`. The naive row is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRow {
    pub model: String,
    pub horizon: usize,
    pub n_sessions: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Paired one-sided test of this model scoring lower weighted quantile
/// loss than the baseline, across per-session seed means. `t` is None when
/// the degenerate zero-variance convention makes it infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub model: String,
    pub horizon: usize,
    pub baseline: String,
    pub t: Option<f64>,
    pub p: f64,
    pub degenerate: bool,
    pub n_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    generated_at: String,
    config_hash: String,
    global_seed: u64,
    n_seeds: usize,
    software_version: String,
    files: Vec<String>,
}

/// SHA-256 hex digest of the config's canonical JSON form. Field order is
/// fixed by the type, so equal configs hash equally. The output directory
/// is excluded: it locates the artifacts and is not part of the protocol.
pub fn config_hash(config: &BenchmarkConfig) -> String {
    let mut canonical = config.clone();
    canonical.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&canonical).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn software_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Current UTC time as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn utc_timestamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (y, m, d) = civil_from_days((secs / 86_400) as i64);
    let rem = secs % 86_400;
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}

/// Gregorian date from days since the Unix epoch (Hinnant's algorithm).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: format!("cannot write: {e}"),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes the full file set under `outdir` (created if missing): the JSON
/// report, a manifest, three CSV tables (relative loss, per-step loss
/// curves, per-step uncertainty ratios), and any training traces and
/// checkpoints the run produced. Returns the paths written.
pub fn emit_reports(artifacts: &RunArtifacts, outdir: &Path) -> Result<Vec<PathBuf>> {
    let dir_err = |e: std::io::Error| Error::Data {
        path: outdir.to_path_buf(),
        reason: format!("cannot create output directory: {e}"),
    };
    fs::create_dir_all(outdir).map_err(dir_err)?;

    let report = &artifacts.report;
    let mut written = Vec::new();

    let report_path = outdir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Config {
        reason: format!("report serialization failed: {e}"),
    })?;
    json.push('\n');
    write_file(&report_path, &json)?;
    written.push(report_path);

    let relative_path = outdir.join("relative_mwql.csv");
    let mut relative = String::from("model,horizon,n_sessions,relative_mwql_mean,relative_mwql_std\n");
    for row in &report.relative_mwql {
        relative.push_str(&format!(
            "{},{},{},{},{}\n",
            row.model,
            row.horizon,
            row.n_sessions,
            fmt_opt(row.mean),
            fmt_opt(row.std)
        ));
    }
    write_file(&relative_path, &relative)?;
    written.push(relative_path);

    // Per-step curves come from each cell's median seed; seconds use the
    // session's own sampling rate.
    let rates: BTreeMap<&str, f64> = report
        .sessions
        .iter()
        .map(|s| (s.id.as_str(), s.sampling_rate))
        .collect();
    let mut loss = String::from("session,model,horizon,step,seconds,mwql\n");
    let mut ratio = String::from("session,model,horizon,step,seconds,uncertainty_ratio\n");
    for cell in &report.cells {
        let Some(median) = cell.seeds.iter().find(|s| s.seed == cell.median_seed) else {
            continue;
        };
        let rate = rates.get(cell.session.as_str()).copied().unwrap_or(1.0);
        for (step, value) in median.metrics.mwql_per_step.iter().enumerate() {
            loss.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.session,
                cell.model,
                cell.horizon,
                step,
                step as f64 / rate,
                fmt_opt(*value)
            ));
        }
        if let Some(ur) = &median.metrics.uncertainty_ratio_per_step {
            for (step, value) in ur.iter().enumerate() {
                ratio.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    cell.session,
                    cell.model,
                    cell.horizon,
                    step,
                    step as f64 / rate,
                    value
                ));
            }
        }
    }
    let loss_path = outdir.join("loss_per_step.csv");
    write_file(&loss_path, &loss)?;
    written.push(loss_path);
    let ratio_path = outdir.join("uncertainty_ratio.csv");
    write_file(&ratio_path, &ratio)?;
    written.push(ratio_path);

    if !artifacts.traces.is_empty() {
        let trace_dir = outdir.join("traces");
        fs::create_dir_all(&trace_dir).map_err(dir_err)?;
        for (stem, trace) in &artifacts.traces {
            let path = trace_dir.join(format!("{stem}.jsonl"));
            write_file(&path, &trace_to_jsonl(trace))?;
            written.push(path);
        }
    }
    if !artifacts.checkpoints.is_empty() {
        let ckpt_dir = outdir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(dir_err)?;
        for (stem, model) in &artifacts.checkpoints {
            let path = ckpt_dir.join(format!("{stem}.txt"));
            let file = fs::File::create(&path).map_err(|e| Error::Data {
                path: path.clone(),
                reason: format!("cannot write: {e}"),
            })?;
            save_checkpoint(model, std::io::BufWriter::new(file))?;
            written.push(path);
        }
    }

    let manifest = Manifest {
        schema_version: report.schema_version,
        generated_at: report.generated_at.clone(),
        config_hash: report.config_hash.clone(),
        global_seed: report.global_seed,
        n_seeds: artifacts.n_seeds,
        software_version: report.software_version.clone(),
        files: written
            .iter()
            .map(|p| {
                p.strip_prefix(outdir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    let manifest_path = outdir.join("manifest.json");
    let mut manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_json.push('\n');
    write_file(&manifest_path, &manifest_json)?;
    written.push(manifest_path);

    Ok(written)
}

/// Reads a previously emitted JSON report back into memory.
pub fn load_report(path: &Path) -> Result<BenchmarkReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: format!("cannot read report: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: format!("report does not match the schema: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_format_and_epoch_math() {
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(civil_from_days(19_723), (2024, 1, 1));
        let ts = utc_timestamp();
        assert_eq!(ts.len(), 20, "{ts}");
        assert!(ts.ends_with('Z') && ts.contains('T'));
    }

    #[test]
    fn emitted_files_are_byte_identical_modulo_timestamp_and_round_trip() {
        let config = BenchmarkConfig::from_toml(
            r#"
            global_seed = 13
            horizons = [6]
            n_seeds = 2
            [[sessions]]
            id = "s0"
            [sessions.generator]
            kind = "ar"
            coefficients = [0.7]
            noise_std = 1.0
            length = 300
            seed = 4
            [[models]]
            kind = "naive"
            [[models]]
            kind = "average"
            [[models]]
            kind = "dlinear"
            n_configs = 1
            max_epochs = 5
            [models.search]
            context_factor = [2.0]
            learning_rate = [0.01]
            kernel_size = [5.0]
            "#,
        )
        .unwrap();

        let first = crate::harness::run::run_benchmark(&config).unwrap();
        let second = crate::harness::run::run_benchmark(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a").join("deep");
        let out2 = dir.path().join("b");
        let files1 = emit_reports(&first, &out1).unwrap();
        let files2 = emit_reports(&second, &out2).unwrap();

        let names = |files: &[PathBuf], root: &Path| -> Vec<String> {
            files
                .iter()
                .map(|p| p.strip_prefix(root).unwrap().to_string_lossy().into_owned())
                .collect()
        };
        let names1 = names(&files1, &out1);
        assert_eq!(names1, names(&files2, &out2));
        assert!(names1.contains(&"report.json".to_string()));
        assert!(names1.iter().any(|n| n.starts_with("traces/")));
        assert!(names1.iter().any(|n| n.starts_with("checkpoints/")));
        assert_eq!(names1.last().unwrap(), "manifest.json");

        for (a, b) in files1.iter().zip(&files2) {
            let strip = |p: &Path| -> String {
                fs::read_to_string(p)
                    .unwrap()
                    .lines()
                    .filter(|l| !l.contains("\"generated_at\""))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(a), strip(b), "{}", a.display());
        }

        let loaded = load_report(&out1.join("report.json")).unwrap();
        assert_eq!(loaded, first.report);

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap())
                .unwrap();
        let listed = manifest["files"].as_array().unwrap();
        assert_eq!(listed.len(), files1.len() - 1);
        assert_eq!(manifest["config_hash"], config_hash(&config).as_str());
        assert_eq!(manifest["n_seeds"], 2);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let base = BenchmarkConfig::from_toml(
            r#"
            global_seed = 7
            [[sessions]]
            [sessions.generator]
            kind = "white_noise"
            noise_std = 1.0
            length = 300
            seed = 1
            [[models]]
            kind = "naive"
            "#,
        )
        .unwrap();
        let h1 = config_hash(&base);
        assert_eq!(h1.len(), 64);
        assert_eq!(h1, config_hash(&base.clone()));
        let mut other = base;
        other.global_seed = 8;
        assert_ne!(h1, config_hash(&other));
    }
}
