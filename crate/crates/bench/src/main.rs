//! Benchmark CLI: configure a protocol and workload, run epochs, compute
//! throughput/commit-rate/prediction metrics, and emit CSV/JSON reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 invariant violation.

use foresight_bench::{config, experiment, metrics};

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use foresight::aspn::{load_csv, AspnConfig, AspnModel, BoxQuery};
use foresight::model::{Interval, Schema};
use foresight::{Error, Result};

#[derive(Parser)]
#[command(name = "bench", about = "Deterministic transaction engine benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark experiment and emit a metrics report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config file's protocol.
        #[arg(long)]
        protocol: Option<String>,
        /// Override the workload's Zipf skew.
        #[arg(long)]
        theta: Option<f64>,
        /// Override the worker thread count.
        #[arg(long)]
        threads: Option<usize>,
        /// RNG seed; mandatory for benchmark runs.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for summary.json, epochs.csv, and trace.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model from CSV data against a schema declaration.
    AspnTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a trained model's overlap predictions against full scans.
    AspnEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Expected-row threshold for predicting a conflict.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the configured workload through the correctness oracle.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Invariant(_) | Error::PhaseOrder(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, protocol, theta, threads, seed, out } => {
            let file = config::load_file(&config)?;
            let overrides = config::Overrides { protocol, theta, threads, seed, out };
            let exp = config::resolve(file, &overrides, true)?;
            let report = experiment::run_experiment(&exp)?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::AspnTrain { data, schema, out, seed } => aspn_train(&data, &schema, &out, seed),
        Command::AspnEval { model, queries, data, threshold, out } => {
            aspn_eval(&model, &queries, &data, threshold, out.as_deref())
        }
        Command::Verify { config, seed, threads } => {
            let file = config::load_file(&config)?;
            let overrides = config::Overrides { seed, threads, ..Default::default() };
            let exp = config::resolve(file, &overrides, false)?;
            let summary = experiment::run_verify(&exp)?;
            println!("{summary}");
            Ok(())
        }
    }
}

fn aspn_train(data: &std::path::Path, schema_path: &std::path::Path, out: &std::path::Path, seed: u64) -> Result<()> {
    let schema_text = std::fs::read_to_string(schema_path)
        .map_err(|e| Error::Config(format!("schema: {e}")))?;
    let schema = Schema::from_json(&schema_text)?;
    let (header, rows) = load_csv(data)?;
    let table_id = schema
        .tables
        .iter()
        .position(|t| t.attributes == header)
        .ok_or_else(|| {
            Error::Config(format!("data: CSV header {header:?} matches no schema table"))
        })? as u32;
    let config = AspnConfig { rng_seed: seed, ..AspnConfig::default() };
    let model = AspnModel::build_single_table(&schema, table_id, &rows, &config)?;
    std::fs::write(out, model.to_json())?;
    println!(
        "trained model over table {table_id} ({} attributes, {} rows) -> {}",
        header.len(),
        rows.len(),
        out.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct QueryFile {
    /// Pairs of axis boxes, one `[lo, hi]` per model attribute.
    pairs: Vec<[Vec<[i64; 2]>; 2]>,
}

#[derive(serde::Serialize)]
struct EvalRow {
    estimate: f64,
    expected_rows: f64,
    predicted: bool,
    actual: bool,
}

#[derive(serde::Serialize)]
struct EvalReport {
    rows: Vec<EvalRow>,
    scores: metrics::PredictionScores,
    prediction_time_us: u64,
    labeling_time_us: u64,
}

fn aspn_eval(
    model_path: &std::path::Path,
    queries: &std::path::Path,
    data: &std::path::Path,
    threshold: f64,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let model = AspnModel::from_json(
        &std::fs::read_to_string(model_path).map_err(|e| Error::Config(format!("model: {e}")))?,
    )?;
    let query_text =
        std::fs::read_to_string(queries).map_err(|e| Error::Config(format!("queries: {e}")))?;
    let file: QueryFile =
        serde_json::from_str(&query_text).map_err(|e| Error::Config(format!("queries: {e}")))?;
    let (_, rows) = load_csv(data)?;
    let arity = model.attrs.len();

    let to_box = |bounds: &Vec<[i64; 2]>| -> Result<BoxQuery> {
        if bounds.len() != arity {
            return Err(Error::Config(format!(
                "queries: box arity {} does not match model arity {arity}",
                bounds.len()
            )));
        }
        Ok(bounds.iter().map(|&[lo, hi]| Some(Interval::new(lo, hi))).collect())
    };

    let mut eval_rows = Vec::with_capacity(file.pairs.len());
    let mut predict_us = 0u64;
    let mut label_us = 0u64;
    let (mut tp, mut fp, mut tn, mut fnn) = (0u64, 0u64, 0u64, 0u64);
    for [qa, qb] in &file.pairs {
        let (a, b) = (to_box(qa)?, to_box(qb)?);

        let t0 = std::time::Instant::now();
        let (estimate, predicted) = match foresight::aspn::intersect_boxes(&a, &b) {
            Some(q) => {
                let p = model.infer_box(&q);
                (p, p * rows.len() as f64 >= threshold)
            }
            None => (0.0, false),
        };
        predict_us += t0.elapsed().as_micros() as u64;

        let t1 = std::time::Instant::now();
        let matches_box = |row: &[i64], q: &BoxQuery| {
            q.iter()
                .zip(row)
                .all(|(iv, v)| iv.map_or(true, |iv| iv.contains(*v)))
        };
        let actual = rows.iter().any(|r| matches_box(r, &a) && matches_box(r, &b));
        label_us += t1.elapsed().as_micros() as u64;

        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => tn += 1,
        }
        eval_rows.push(EvalRow {
            estimate,
            expected_rows: estimate * rows.len() as f64,
            predicted,
            actual,
        });
    }

    let report = EvalReport {
        rows: eval_rows,
        scores: metrics::compute_prediction_metrics(tp, fp, tn, fnn),
        prediction_time_us: predict_us,
        labeling_time_us: label_us,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => std::fs::write(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}
