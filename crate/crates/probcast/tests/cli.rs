//! End-to-end checks of the command-line surface: subcommands, exit codes,
//! flag overrides, and the emitted file set.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probcast"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const GEN_SPEC: &str = r#"
[[series]]
kind = "ar"
coefficients = [0.8]
noise_std = 1.0
length = 500
seed = 7

[[series]]
kind = "white_noise"
noise_std = 0.5
length = 500
seed = 9
"#;

#[test]
fn generate_then_ingest_check_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), GEN_SPEC).unwrap();

    let gen = run_in(
        dir.path(),
        &[
            "generate",
            "--spec",
            "gen.toml",
            "--out",
            "data.csv",
            "--time-column",
            "t",
        ],
    );
    assert_eq!(gen.status.code(), Some(0));

    let check = run_in(
        dir.path(),
        &["ingest-check", "--csv", "data.csv", "--time-column", "t"],
    );
    assert_eq!(check.status.code(), Some(0));
    let text = stdout_of(&check);
    assert!(text.contains("id=ar-7 length=500 sampling_rate=35"), "{text}");
    assert!(text.contains("ok: 2 series"), "{text}");

    // Without --out the CSV goes to stdout.
    let piped = run_in(dir.path(), &["generate", "--spec", "gen.toml"]);
    assert_eq!(piped.status.code(), Some(0));
    assert!(stdout_of(&piped).starts_with("ar-7,white_noise-9\n"));
}

#[test]
fn run_emits_reports_honors_overrides_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), GEN_SPEC).unwrap();
    let gen = run_in(
        dir.path(),
        &["generate", "--spec", "gen.toml", "--out", "data.csv"],
    );
    assert_eq!(gen.status.code(), Some(0));

    let config = r#"
global_seed = 1
horizons = [6, 12]
[[sessions]]
csv = "data.csv"
[[models]]
kind = "naive"
[[models]]
kind = "average"
"#;
    fs::write(dir.path().join("bench.toml"), config).unwrap();

    let first = run_in(
        dir.path(),
        &[
            "run", "--config", "bench.toml", "--out", "a", "--seed", "99",
        ],
    );
    assert_eq!(first.status.code(), Some(0), "{first:?}");
    for name in [
        "report.json",
        "relative_mwql.csv",
        "loss_per_step.csv",
        "uncertainty_ratio.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("a").join(name).is_file(), "missing {name}");
    }
    // Progress goes to stderr, line delimited.
    let log = String::from_utf8_lossy(&first.stderr).into_owned();
    assert!(log.lines().any(|l| l.contains("model=naive")), "{log}");

    let second = run_in(
        dir.path(),
        &[
            "run", "--config", "bench.toml", "--out", "b", "--seed", "99",
        ],
    );
    assert_eq!(second.status.code(), Some(0));
    let strip = |p: &Path| -> String {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("\"generated_at\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip(&dir.path().join("a/report.json")),
        strip(&dir.path().join("b/report.json"))
    );

    // The seed override landed in the report.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["global_seed"], 99);
    assert_eq!(
        report["cells"].as_array().unwrap().len(),
        2 * 2 * 2,
        "sessions x models x horizons"
    );

    let summary = run_in(dir.path(), &["report", "--report", "a/report.json"]);
    assert_eq!(summary.status.code(), Some(0));
    let text = stdout_of(&summary);
    assert!(text.contains("relative to naive:"), "{text}");
}

#[test]
fn exit_codes_distinguish_config_data_and_partial_failures() {
    let dir = tempfile::tempdir().unwrap();

    fs::write(dir.path().join("bad.toml"), "global_seed = \"x\"").unwrap();
    let bad = run_in(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(bad.status.code(), Some(2));

    let missing = run_in(dir.path(), &["ingest-check", "--csv", "absent.csv"]);
    assert_eq!(missing.status.code(), Some(3));

    let config = r#"
global_seed = 5
[[sessions]]
[sessions.generator]
kind = "white_noise"
noise_std = 1.0
length = 400
seed = 3
[[models]]
kind = "naive"
[[models]]
kind = "average"
"#;
    fs::write(dir.path().join("bench.toml"), config).unwrap();
    // Horizon 120 cannot tile the 80-step test span: recorded failures.
    let partial = run_in(
        dir.path(),
        &[
            "run", "--config", "bench.toml", "--out", "o", "--horizons", "6,120",
        ],
    );
    assert_eq!(partial.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 2);

    // Unknown config keys are config errors, not silent defaults.
    fs::write(
        dir.path().join("typo.toml"),
        config.replace("global_seed", "globl_seed"),
    )
    .unwrap();
    let typo = run_in(dir.path(), &["run", "--config", "typo.toml"]);
    assert_eq!(typo.status.code(), Some(2));
}
