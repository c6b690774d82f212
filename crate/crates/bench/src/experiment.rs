//! Experiment execution: epoch loops, prediction-quality labeling against
//! full-scan ground truth, report assembly, and the verification mode that
//! replays every batch through the correctness oracle.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use foresight::aspn::ModelSet;
use foresight::engine::EpochDriver;
use foresight::model::{AttributeVector, Predicate, TableId, Transaction};
use foresight::oracle::{check_serializable, conflict_ground_truth, serial_replay, ConflictGraph};
use foresight::workloads::gen_batch;
use foresight::{Error, Result};

use crate::config::Experiment;
use crate::metrics::{
    compute_prediction_metrics, EpochRow, MetricsReport, PhaseMeans, PredictionReport,
};

/// Hash of the canonical per-epoch batches: the generator is invoked at
/// full batch size for every epoch index, independent of how many slots
/// carried retries will consume, so identical (spec, seed, epochs) give
/// identical checksums across protocols.
pub fn workload_checksum(exp: &Experiment) -> Result<String> {
    let mut hasher = Sha256::new();
    for epoch in 0..exp.epochs {
        let batch = gen_batch(&exp.spec, exp.engine.batch_size, epoch)?;
        hasher.update(serde_json::to_vec(&batch)?);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Labels a seeded sample of transaction pairs: model prediction against
/// full-scan ground truth on the pre-batch records.
struct PairLabeler<'a> {
    models: &'a ModelSet,
    records: &'a BTreeMap<TableId, Vec<AttributeVector>>,
}

impl PairLabeler<'_> {
    fn combos<'t>(
        a: &'t Transaction,
        b: &'t Transaction,
    ) -> impl Iterator<Item = (&'t Predicate, &'t Predicate)> {
        let writes_vs_all = a
            .write_summary
            .iter()
            .flat_map(move |pa| b.read_summary.iter().chain(&b.write_summary).map(move |pb| (pa, pb)));
        let reads_vs_writes = a
            .read_summary
            .iter()
            .flat_map(move |pa| b.write_summary.iter().map(move |pb| (pa, pb)));
        writes_vs_all.chain(reads_vs_writes)
    }

    fn predict(&self, a: &Transaction, b: &Transaction) -> Result<bool> {
        for (pa, pb) in Self::combos(a, b) {
            if self.models.predict_conflict(pa, pb)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn truth(&self, a: &Transaction, b: &Transaction) -> bool {
        for (pa, pb) in Self::combos(a, b) {
            if pa.table_id != pb.table_id {
                continue;
            }
            let Some(records) = self.records.get(&pa.table_id) else { continue };
            if conflict_ground_truth(records, pa, pb) {
                return true;
            }
        }
        false
    }
}

#[derive(Default)]
struct Confusion {
    tp: u64,
    fp: u64,
    tn: u64,
    fnn: u64,
    predict_us: u64,
    truth_us: u64,
}

/// Runs the configured epochs and assembles the report.
pub fn run_experiment(exp: &Experiment) -> Result<MetricsReport> {
    let checksum = workload_checksum(exp)?;
    let mut driver = EpochDriver::new(exp.engine.clone(), exp.spec.clone())?;
    if let Some(out) = &exp.out {
        std::fs::create_dir_all(out)?;
        let trace = std::fs::File::create(out.join("trace.jsonl"))?;
        driver = driver.with_trace(Box::new(trace));
    }

    let mut rows = Vec::new();
    let mut confusion = Confusion::default();
    let mut total_committed = 0u64;
    let mut total_aborted = 0u64;
    // Engine time only; prediction-quality labeling is timed separately.
    let mut wall_time_us = 0u64;
    for epoch in 0..exp.epochs {
        let label_records = if driver.models().is_some() && exp.metric_pairs > 0 {
            let dump = driver.store().dump();
            let schema = driver.store().schema().clone();
            Some(
                schema
                    .tables
                    .iter()
                    .enumerate()
                    .map(|(id, ts)| {
                        let rows: Vec<AttributeVector> =
                            dump.get(&ts.name).map(|m| m.values().cloned().collect()).unwrap_or_default();
                        (id as TableId, rows)
                    })
                    .collect::<BTreeMap<_, _>>(),
            )
        } else {
            None
        };

        let t_epoch = Instant::now();
        let (outcome, batch) = driver.run_epoch()?;
        wall_time_us += t_epoch.elapsed().as_micros() as u64;
        total_committed += outcome.committed_count() as u64;
        total_aborted += outcome.aborted.len() as u64;
        rows.push(EpochRow::from_outcome(epoch, &outcome));

        if let (Some(records), Some(models)) = (label_records.as_ref(), driver.models()) {
            label_pairs(
                &batch,
                models,
                records,
                exp.metric_pairs,
                exp.seed ^ epoch,
                &mut confusion,
            )?;
        }
    }

    let total_txns: u64 = rows.iter().map(|r| r.batch_size as u64).sum();
    let n = rows.len().max(1) as u64;
    let mean = |f: fn(&EpochRow) -> u64| rows.iter().map(f).sum::<u64>() / n;
    let prediction = (confusion.tp + confusion.fp + confusion.tn + confusion.fnn > 0).then(|| {
        PredictionReport {
            scores: compute_prediction_metrics(confusion.tp, confusion.fp, confusion.tn, confusion.fnn),
            true_positives: confusion.tp,
            false_positives: confusion.fp,
            true_negatives: confusion.tn,
            false_negatives: confusion.fnn,
            pairs_labeled: confusion.tp + confusion.fp + confusion.tn + confusion.fnn,
            prediction_time_us: confusion.predict_us,
            execution_time_us: confusion.truth_us,
        }
    });

    let report = MetricsReport {
        config: exp.file.clone(),
        seed: exp.seed,
        protocol: exp.protocol.to_string(),
        workload_checksum: checksum,
        total_committed,
        total_aborted_retries: total_aborted,
        commit_rate: if total_txns == 0 { 1.0 } else { total_committed as f64 / total_txns as f64 },
        txns_per_sec: if wall_time_us == 0 {
            0.0
        } else {
            total_committed as f64 / (wall_time_us as f64 / 1e6)
        },
        wall_time_us,
        mean_phase_us: PhaseMeans {
            prediction_us: mean(|r| r.prediction_us),
            execution_us: mean(|r| r.execution_us),
            commit_us: mean(|r| r.commit_us),
            fallback_us: mean(|r| r.fallback_us),
            gc_us: mean(|r| r.gc_us),
        },
        epochs: rows,
        prediction,
    };

    if let Some(out) = &exp.out {
        std::fs::write(out.join("summary.json"), report.to_json())?;
        let csv = std::fs::File::create(out.join("epochs.csv"))?;
        crate::metrics::write_epoch_csv(csv, &report.epochs)?;
    }
    Ok(report)
}

fn label_pairs(
    batch: &[Transaction],
    models: &ModelSet,
    records: &BTreeMap<TableId, Vec<AttributeVector>>,
    metric_pairs: usize,
    seed: u64,
    confusion: &mut Confusion,
) -> Result<()> {
    if batch.len() < 2 {
        return Ok(());
    }
    let labeler = PairLabeler { models, records };
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x1AB31);
    let mut pairs = Vec::with_capacity(metric_pairs);
    for _ in 0..metric_pairs {
        let i = rng.gen_range(0..batch.len());
        let j = rng.gen_range(0..batch.len());
        if i != j {
            pairs.push((i.min(j), i.max(j)));
        }
    }

    let t0 = Instant::now();
    let predicted: Vec<bool> = pairs
        .iter()
        .map(|&(i, j)| labeler.predict(&batch[i], &batch[j]))
        .collect::<Result<_>>()?;
    confusion.predict_us += t0.elapsed().as_micros() as u64;

    let t1 = Instant::now();
    let truth: Vec<bool> = pairs
        .iter()
        .map(|&(i, j)| labeler.truth(&batch[i], &batch[j]))
        .collect();
    confusion.truth_us += t1.elapsed().as_micros() as u64;

    for (p, t) in predicted.into_iter().zip(truth) {
        match (p, t) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, true) => confusion.fnn += 1,
            (false, false) => confusion.tn += 1,
        }
    }
    Ok(())
}

/// Verification mode: every batch must produce a conflict-serializable
/// committed set whose topological serial replay reproduces the engine's
/// store, with clean epoch boundaries throughout.
pub fn run_verify(exp: &Experiment) -> Result<String> {
    let mut driver = EpochDriver::new(exp.engine.clone(), exp.spec.clone())?;
    let schema = driver.store().schema().clone();
    for epoch in 0..exp.epochs {
        let before = driver.store().dump();
        let (outcome, batch) = driver.run_epoch()?;
        let refs: Vec<&Transaction> = batch.iter().collect();
        let graph = ConflictGraph::build(&refs, &outcome.committed_main, &outcome.committed_fallback)?;
        if !check_serializable(&graph) {
            return Err(Error::Invariant(format!(
                "epoch {epoch}: committed set has a cyclic conflict graph"
            )));
        }
        let order = graph
            .topological_order()
            .ok_or_else(|| Error::Invariant(format!("epoch {epoch}: no topological order")))?;
        let ordered: Vec<&Transaction> = order.iter().map(|&t| &batch[t as usize - 1]).collect();
        let replay = serial_replay(&schema, &before, &ordered)?;
        if replay != driver.store().dump() {
            return Err(Error::Invariant(format!(
                "epoch {epoch}: store diverges from topological serial replay"
            )));
        }
        if !driver.store().at_epoch_boundary() || driver.store().version_count() != 0 {
            return Err(Error::Invariant(format!("epoch {epoch}: unclean epoch boundary")));
        }
    }
    Ok(format!(
        "verified {} epochs of {} on {:?}: serializable, replay-equal, clean boundaries",
        exp.epochs, exp.protocol, exp.spec.kind
    ))
}
