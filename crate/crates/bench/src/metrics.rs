//! Metrics assembly: per-epoch rows, confusion-matrix arithmetic, and the
//! JSON/CSV report surfaces.

use serde::{Deserialize, Serialize};

use foresight::engine::BatchOutcome;

/// Confusion-matrix summary. A zero denominator reports 1.0 and sets the
/// flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub degenerate: bool,
}

/// Standard confusion arithmetic over a shared pair universe.
pub fn compute_prediction_metrics(tp: u64, fp: u64, tn: u64, fnn: u64) -> PredictionScores {
    let total = tp + fp + tn + fnn;
    let mut degenerate = false;
    let mut ratio = |num: u64, den: u64| -> f64 {
        if den == 0 {
            degenerate = true;
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(tp + tn, total);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fnn);
    PredictionScores { accuracy, precision, recall, degenerate }
}

/// Prediction-quality block of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub scores: PredictionScores,
    pub true_positives: u64,
    pub false_positives: u64,
    pub true_negatives: u64,
    pub false_negatives: u64,
    pub pairs_labeled: u64,
    /// Inference time over the labeled pairs (wall clock).
    pub prediction_time_us: u64,
    /// Full-scan ground-truth labeling time over the same pairs.
    pub execution_time_us: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub batch_size: usize,
    pub committed_main: usize,
    pub committed_fallback: usize,
    pub aborted: usize,
    pub commit_rate: f64,
    pub deferred: usize,
    pub predicted_pairs: usize,
    pub actual_pairs: usize,
    pub prediction_us: u64,
    pub execution_us: u64,
    pub commit_us: u64,
    pub fallback_us: u64,
    pub gc_us: u64,
}

impl EpochRow {
    pub fn from_outcome(epoch: u64, outcome: &BatchOutcome) -> EpochRow {
        let m = &outcome.metrics;
        EpochRow {
            epoch,
            batch_size: m.batch_size,
            committed_main: outcome.committed_main.len(),
            committed_fallback: outcome.committed_fallback.len(),
            aborted: outcome.aborted.len(),
            commit_rate: m.commit_rate,
            deferred: m.deferred_by_prediction,
            predicted_pairs: m.predicted_conflict_pairs,
            actual_pairs: m.actual_conflict_pairs,
            prediction_us: m.timings.prediction_us,
            execution_us: m.timings.execution_us,
            commit_us: m.timings.commit_us,
            fallback_us: m.timings.fallback_us,
            gc_us: m.timings.gc_us,
        }
    }
}

pub const CSV_HEADER: &str = "epoch,batch_size,committed_main,committed_fallback,aborted,\
commit_rate,deferred,predicted_pairs,actual_pairs,prediction_us,execution_us,commit_us,\
fallback_us,gc_us";

pub fn write_epoch_csv<W: std::io::Write>(mut w: W, rows: &[EpochRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.batch_size,
            r.committed_main,
            r.committed_fallback,
            r.aborted,
            r.commit_rate,
            r.deferred,
            r.predicted_pairs,
            r.actual_pairs,
            r.prediction_us,
            r.execution_us,
            r.commit_us,
            r.fallback_us,
            r.gc_us
        )?;
    }
    Ok(())
}

/// Full experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: crate::config::ExperimentFile,
    pub seed: u64,
    pub protocol: String,
    /// Hash of the canonical per-epoch generated batches; identical across
    /// protocol sweeps with the same seed.
    pub workload_checksum: String,
    pub epochs: Vec<EpochRow>,
    pub total_committed: u64,
    pub total_aborted_retries: u64,
    pub commit_rate: f64,
    pub txns_per_sec: f64,
    pub wall_time_us: u64,
    pub mean_phase_us: PhaseMeans,
    pub prediction: Option<PredictionReport>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseMeans {
    pub prediction_us: u64,
    pub execution_us: u64,
    pub commit_us: u64,
    pub fallback_us: u64,
    pub gc_us: u64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Everything except wall-clock timing fields, for determinism checks.
    pub fn deterministic_view(&self) -> String {
        let mut v: serde_json::Value = serde_json::from_str(&self.to_json()).expect("round trip");
        strip_timing(&mut v);
        serde_json::to_string_pretty(&v).expect("view serializes")
    }
}

fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| {
                !(k.ends_with("_us") || k.ends_with("_time_us") || k == "txns_per_sec")
            });
            for (_, child) in map.iter_mut() {
                strip_timing(child);
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                strip_timing(item);
            }
        }
        _ => {}
    }
}
