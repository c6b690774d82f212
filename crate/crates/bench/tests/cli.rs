//! End-to-end CLI and report tests: exit codes, golden CSV schema, report
//! determinism, the protocol-sweep comparability guarantee, and the skew
//! trend.

use std::path::{Path, PathBuf};
use std::process::Command;

use foresight_bench::config::{load_file, resolve, Overrides};
use foresight_bench::experiment::{run_experiment, workload_checksum};
use foresight_bench::metrics::CSV_HEADER;

fn bench_bin() -> &'static str {
    env!("CARGO_BIN_EXE_bench")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const BASE_CONFIG: &str = r#"
protocol = "foresight"
epochs = 3
threads = 2
batch_size = 64

[workload]
kind = "ycsb-a"
partitions = 1
keys_per_partition = 1000
zipf_theta = 0.9
"#;

#[test]
fn run_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", BASE_CONFIG);
    let out = Command::new(bench_bin())
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seed"), "diagnostic names the field: {err}");
}

#[test]
fn invalid_config_field_exits_one_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "exp.toml",
        &BASE_CONFIG.replace("zipf_theta = 0.9", "zipf_theta = 1.5"),
    );
    let out = Command::new(bench_bin())
        .args(["run", "--config", cfg.to_str().unwrap(), "--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));

    let cfg2 = write_config(dir.path(), "exp2.toml", &BASE_CONFIG.replace("ycsb-a", "nosuch"));
    let out2 = Command::new(bench_bin())
        .args(["run", "--config", cfg2.to_str().unwrap(), "--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(out2.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out2.stderr).contains("kind"));
}

#[test]
fn run_emits_reports_and_golden_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", BASE_CONFIG);
    let out_dir = dir.path().join("out");
    let out = Command::new(bench_bin())
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("epochs.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 4, "header plus one row per epoch");

    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("workload_checksum"));
    let trace = std::fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 3);
}

#[test]
fn zero_epochs_reports_zero_rows_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", &BASE_CONFIG.replace("epochs = 3", "epochs = 0"));
    let out = Command::new(bench_bin())
        .args(["run", "--config", cfg.to_str().unwrap(), "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 0);
}

#[test]
fn protocol_sweep_shares_workload_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "exp.toml", BASE_CONFIG);
    let mut checksums = Vec::new();
    for protocol in ["foresight", "aria"] {
        let file = load_file(&cfg_path).unwrap();
        let overrides = Overrides {
            protocol: Some(protocol.into()),
            seed: Some(99),
            ..Default::default()
        };
        let exp = resolve(file, &overrides, true).unwrap();
        checksums.push(workload_checksum(&exp).unwrap());
    }
    assert_eq!(checksums[0], checksums[1], "identical seeds give identical workloads");
}

#[test]
fn report_deterministic_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "exp.toml", BASE_CONFIG);
    let run = || {
        let file = load_file(&cfg_path).unwrap();
        let overrides = Overrides { seed: Some(5), ..Default::default() };
        let exp = resolve(file, &overrides, true).unwrap();
        run_experiment(&exp).unwrap().deterministic_view()
    };
    assert_eq!(run(), run());
}

#[test]
fn commit_rate_non_increasing_in_skew() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(
        dir.path(),
        "exp.toml",
        &BASE_CONFIG
            .replace("batch_size = 64", "batch_size = 128")
            .replace("epochs = 3", "epochs = 4"),
    );
    for protocol in ["foresight", "aria"] {
        let mut rates = Vec::new();
        for theta in [0.0, 0.5, 0.9, 0.999] {
            let file = load_file(&cfg_path).unwrap();
            let overrides = Overrides {
                protocol: Some(protocol.into()),
                theta: Some(theta),
                seed: Some(11),
                ..Default::default()
            };
            let exp = resolve(file, &overrides, true).unwrap();
            let report = run_experiment(&exp).unwrap();
            rates.push(report.commit_rate);
        }
        for w in rates.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "{protocol}: commit rate increased with skew: {rates:?}"
            );
        }
    }
}

#[test]
fn verify_subcommand_passes_on_predictive_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.toml", BASE_CONFIG);
    let out = Command::new(bench_bin())
        .args(["verify", "--config", cfg.to_str().unwrap(), "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verified"));
}

#[test]
fn aspn_train_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    // Two correlated columns: b = a + 1 over [0, 255].
    let mut csv = String::from("a,b\n");
    for i in 0..2000 {
        let a = (i * 37) % 255;
        csv.push_str(&format!("{a},{}\n", a + 1));
    }
    let data = dir.path().join("train.csv");
    std::fs::write(&data, &csv).unwrap();

    let schema = serde_json::json!({
        "tables": [{
            "name": "eval",
            "attributes": ["a", "b"],
            "domains": [{"lo": 0, "hi": 255}, {"lo": 0, "hi": 256}],
            "record_count": 2000
        }]
    });
    let schema_path = dir.path().join("schema.json");
    std::fs::write(&schema_path, schema.to_string()).unwrap();

    let model_path = dir.path().join("model.json");
    let out = Command::new(bench_bin())
        .args([
            "aspn-train",
            "--data",
            data.to_str().unwrap(),
            "--schema",
            schema_path.to_str().unwrap(),
            "--out",
            model_path.to_str().unwrap(),
            "--seed",
            "9",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // One disjoint-on-the-diagonal pair, one overlapping pair.
    let queries = serde_json::json!({
        "pairs": [
            [[[0, 50], [0, 256]], [[0, 255], [200, 256]]],
            [[[0, 128], [0, 256]], [[64, 255], [0, 256]]]
        ]
    });
    let queries_path = dir.path().join("queries.json");
    std::fs::write(&queries_path, queries.to_string()).unwrap();

    let out = Command::new(bench_bin())
        .args([
            "aspn-eval",
            "--model",
            model_path.to_str().unwrap(),
            "--queries",
            queries_path.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["predicted"], false);
    assert_eq!(rows[0]["actual"], false);
    assert_eq!(rows[1]["predicted"], true);
    assert_eq!(rows[1]["actual"], true);
    assert_eq!(report["scores"]["accuracy"], 1.0);
}

#[test]
fn missing_files_exit_one() {
    let out = Command::new(bench_bin())
        .args(["run", "--config", "/nonexistent.toml", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
