//! Experiment configuration: one TOML or JSON file, with CLI flags
//! overriding file fields. The seed is mandatory for benchmark runs so
//! every report is reproducible by construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use foresight::engine::{EngineConfig, Protocol};
use foresight::workloads::{WorkloadKind, WorkloadSpec};
use foresight::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub protocol: String,
    pub epochs: u64,
    #[serde(default = "defaults::threads")]
    pub threads: usize,
    pub seed: Option<u64>,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Defaults to true for the predictive protocol, false otherwise.
    pub prediction: Option<bool>,
    #[serde(default = "defaults::defer_threshold")]
    pub defer_threshold: usize,
    /// Transaction pairs sampled per epoch for prediction-quality labeling.
    #[serde(default = "defaults::metric_pairs")]
    pub metric_pairs: usize,
    pub workload: WorkloadSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSection {
    pub kind: String,
    #[serde(default = "defaults::partitions")]
    pub partitions: u32,
    #[serde(default = "defaults::keys")]
    pub keys_per_partition: u64,
    pub read_fraction: Option<f64>,
    #[serde(default = "defaults::ops")]
    pub ops_per_txn: usize,
    #[serde(default)]
    pub zipf_theta: f64,
}

mod defaults {
    pub fn threads() -> usize {
        1
    }
    pub fn batch_size() -> usize {
        500
    }
    pub fn defer_threshold() -> usize {
        3
    }
    pub fn metric_pairs() -> usize {
        200
    }
    pub fn partitions() -> u32 {
        1
    }
    pub fn keys() -> u64 {
        40_000
    }
    pub fn ops() -> usize {
        10
    }
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub protocol: Option<String>,
    pub theta: Option<f64>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub file: ExperimentFile,
    pub protocol: Protocol,
    pub engine: EngineConfig,
    pub spec: WorkloadSpec,
    pub epochs: u64,
    pub seed: u64,
    pub metric_pairs: usize,
    pub out: Option<PathBuf>,
}

pub fn load_file(path: &Path) -> Result<ExperimentFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let parsed: ExperimentFile = if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config field error: {e}")))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("config field error: {e}")))?
    };
    Ok(parsed)
}

fn parse_kind(s: &str) -> Result<WorkloadKind> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "ycsb-a" | "ycsba" => Ok(WorkloadKind::YcsbA),
        "ycsb-b" | "ycsbb" => Ok(WorkloadKind::YcsbB),
        "tpcc-lite" | "tpcclite" | "tpcc" => Ok(WorkloadKind::TpccLite),
        "synthetic" | "aspn-synthetic" => Ok(WorkloadKind::AspnSynthetic),
        other => Err(Error::Config(format!("workload.kind: unknown kind {other:?}"))),
    }
}

/// Resolves the file plus overrides into a runnable experiment. `run`
/// requires a seed (flag or file field).
pub fn resolve(mut file: ExperimentFile, overrides: &Overrides, seed_required: bool) -> Result<Experiment> {
    if let Some(p) = &overrides.protocol {
        file.protocol = p.clone();
    }
    if let Some(t) = overrides.theta {
        file.workload.zipf_theta = t;
    }
    if let Some(t) = overrides.threads {
        file.threads = t;
    }
    if let Some(s) = overrides.seed {
        file.seed = Some(s);
    }
    let seed = match file.seed {
        Some(s) => s,
        None if seed_required => {
            return Err(Error::Config("seed: required for benchmark runs (--seed)".into()))
        }
        None => 0,
    };

    let protocol: Protocol = file.protocol.parse()?;
    let kind = parse_kind(&file.workload.kind)?;
    let read_fraction = file.workload.read_fraction.unwrap_or(match kind {
        WorkloadKind::YcsbA => 0.5,
        WorkloadKind::YcsbB => 0.95,
        _ => 0.5,
    });
    let spec = WorkloadSpec {
        kind,
        partitions: file.workload.partitions,
        keys_per_partition: file.workload.keys_per_partition,
        read_fraction,
        ops_per_txn: file.workload.ops_per_txn,
        zipf_theta: file.workload.zipf_theta,
        rng_seed: seed,
    };
    spec.validate()?;

    let prediction = file.prediction.unwrap_or(protocol == Protocol::ForeSight);
    let engine = EngineConfig {
        protocol,
        worker_threads: file.threads,
        batch_size: file.batch_size,
        prediction_enabled: prediction,
        defer_threshold: file.defer_threshold,
        aspn: foresight::aspn::AspnConfig { rng_seed: seed, ..Default::default() },
        rng_seed: seed,
    };
    engine.validate()?;

    Ok(Experiment {
        epochs: file.epochs,
        seed,
        metric_pairs: file.metric_pairs,
        out: overrides.out.clone(),
        protocol,
        engine,
        spec,
        file,
    })
}
