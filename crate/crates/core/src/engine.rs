//! The five-phase batch pipeline: prediction → execution → commit →
//! fallback → garbage collection.
//!
//! Prediction scores summary pairs through the learned models and defers
//! transactions whose predicted-conflict degree reaches the threshold.
//! Execution runs the rest in parallel on the epoch snapshot, buffering
//! writes as uncommitted versions. The commit phase validates actual
//! read/write sets under the configured protocol, finalizes the winners
//! into the next base state, and routes the rest to fallback (or to the
//! next batch for protocols without one). Fallback re-executes deferred
//! and rejected transactions over version chains in ascending TID order,
//! so each commit observes all prior ones. GC collapses every chain and
//! advances the epoch.
//!
//! The outcome contract is thread-count independence: everything except
//! wall-clock timings is identical for any `worker_threads`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aspn::{AspnConfig, ModelSet};
use crate::error::{Error, Result};
use crate::model::{AttributeVector, Key, Op, Predicate, Tid, Transaction};
use crate::mtfs;
use crate::store::{Snapshot, Store, VersionState};
use crate::workloads::{self, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    ForeSight,
    Rule1Only,
    Rule2Only,
    Aria,
    AriaFB,
    Fga,
}

impl Protocol {
    /// Protocols that re-execute rejected transactions in the same batch.
    pub fn has_fallback(&self) -> bool {
        matches!(
            self,
            Protocol::ForeSight | Protocol::Rule1Only | Protocol::Rule2Only | Protocol::AriaFB
        )
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Protocol> {
        match s.to_ascii_lowercase().as_str() {
            "foresight" => Ok(Protocol::ForeSight),
            "rule1" | "rule1only" => Ok(Protocol::Rule1Only),
            "rule2" | "rule2only" => Ok(Protocol::Rule2Only),
            "aria" => Ok(Protocol::Aria),
            "ariafb" | "aria-fb" => Ok(Protocol::AriaFB),
            "fga" => Ok(Protocol::Fga),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Protocol::ForeSight => "foresight",
            Protocol::Rule1Only => "rule1",
            Protocol::Rule2Only => "rule2",
            Protocol::Aria => "aria",
            Protocol::AriaFB => "ariafb",
            Protocol::Fga => "fga",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    pub protocol: Protocol,
    pub worker_threads: usize,
    pub batch_size: usize,
    pub prediction_enabled: bool,
    /// Predicted-conflict degree at which a transaction is early-deferred.
    pub defer_threshold: usize,
    pub aspn: AspnConfig,
    pub rng_seed: u64,
}

impl EngineConfig {
    pub fn new(protocol: Protocol) -> EngineConfig {
        EngineConfig {
            protocol,
            worker_threads: 1,
            batch_size: 100,
            prediction_enabled: protocol == Protocol::ForeSight,
            defer_threshold: 3,
            aspn: AspnConfig::default(),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > mtfs::MAX_BATCH {
            return Err(Error::Config(format!(
                "batch_size must be in 1..={}, got {}",
                mtfs::MAX_BATCH,
                self.batch_size
            )));
        }
        if self.worker_threads == 0 {
            return Err(Error::Config("worker_threads must be positive".into()));
        }
        if self.defer_threshold == 0 {
            return Err(Error::Config("defer_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Microsecond wall times per phase; excluded from the deterministic
/// fingerprint.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub prediction_us: u64,
    pub execution_us: u64,
    pub commit_us: u64,
    pub fallback_us: u64,
    pub gc_us: u64,
}

impl PhaseTimings {
    pub fn total_us(&self) -> u64 {
        self.prediction_us + self.execution_us + self.commit_us + self.fallback_us + self.gc_us
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub batch_size: usize,
    pub deferred_by_prediction: usize,
    pub predicted_conflict_pairs: usize,
    pub actual_conflict_pairs: usize,
    pub internally_failed: usize,
    pub reclaimed_versions: usize,
    pub commit_rate: f64,
    pub timings: PhaseTimings,
}

/// Per-batch result: the three tid sets partition the batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub committed_main: BTreeSet<Tid>,
    pub committed_fallback: BTreeSet<Tid>,
    pub aborted: BTreeSet<Tid>,
    pub metrics: BatchMetrics,
}

impl BatchOutcome {
    pub fn committed_count(&self) -> usize {
        self.committed_main.len() + self.committed_fallback.len()
    }

    /// Canonical serialization of everything except wall-clock timings.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            committed_main: &'a BTreeSet<Tid>,
            committed_fallback: &'a BTreeSet<Tid>,
            aborted: &'a BTreeSet<Tid>,
            batch_size: usize,
            deferred: usize,
            predicted_pairs: usize,
            actual_pairs: usize,
            failed: usize,
            reclaimed: usize,
        }
        serde_json::to_string(&View {
            committed_main: &self.committed_main,
            committed_fallback: &self.committed_fallback,
            aborted: &self.aborted,
            batch_size: self.metrics.batch_size,
            deferred: self.metrics.deferred_by_prediction,
            predicted_pairs: self.metrics.predicted_conflict_pairs,
            actual_pairs: self.metrics.actual_conflict_pairs,
            failed: self.metrics.internally_failed,
            reclaimed: self.metrics.reclaimed_versions,
        })
        .expect("outcome serializes")
    }
}

/// Output of one transaction's op interpretation.
struct ExecOutput {
    read_set: BTreeSet<Key>,
    write_set: BTreeSet<Key>,
    writes: BTreeMap<Key, AttributeVector>,
}

/// Read surface an op interpreter runs against.
trait OpSource {
    fn read(&self, key: Key) -> Result<AttributeVector>;
    fn scan(&self, pred: &Predicate) -> Vec<(Key, AttributeVector)>;
}

struct SnapshotSource<'a> {
    snap: Snapshot<'a>,
}

impl OpSource for SnapshotSource<'_> {
    fn read(&self, key: Key) -> Result<AttributeVector> {
        self.snap.read(key).cloned()
    }

    fn scan(&self, pred: &Predicate) -> Vec<(Key, AttributeVector)> {
        self.snap.scan(pred).into_iter().map(|(k, v)| (k, v.clone())).collect()
    }
}

struct FallbackSource<'a> {
    store: &'a Store,
    reader_tid: Tid,
}

impl OpSource for FallbackSource<'_> {
    fn read(&self, key: Key) -> Result<AttributeVector> {
        self.store.read_visible(key, self.reader_tid)
    }

    fn scan(&self, pred: &Predicate) -> Vec<(Key, AttributeVector)> {
        self.store.fallback_scan(pred, self.reader_tid)
    }
}

/// Runs the op list with an own-writes overlay: reads see the transaction's
/// earlier buffered writes, matching one-at-a-time serial application.
fn execute_ops(source: &dyn OpSource, ops: &[Op]) -> Result<ExecOutput> {
    let mut local: BTreeMap<Key, AttributeVector> = BTreeMap::new();
    let mut read_set = BTreeSet::new();
    let mut write_set = BTreeSet::new();

    let merged_scan = |local: &BTreeMap<Key, AttributeVector>,
                       pred: &Predicate|
     -> BTreeMap<Key, AttributeVector> {
        let mut out: BTreeMap<Key, AttributeVector> = source.scan(pred).into_iter().collect();
        for (k, v) in local {
            if k.table_id != pred.table_id {
                continue;
            }
            if pred.matches(v) {
                out.insert(*k, v.clone());
            } else {
                out.remove(k);
            }
        }
        out
    };

    for op in ops {
        match op {
            Op::PointRead(key) => {
                if !local.contains_key(key) {
                    source.read(*key)?;
                }
                read_set.insert(*key);
            }
            Op::RangeRead(pred) => {
                read_set.extend(merged_scan(&local, pred).into_keys());
            }
            Op::PointWrite(key, value) => {
                local.insert(*key, value.clone());
                write_set.insert(*key);
            }
            Op::RangeWrite(pred, delta) => {
                for (k, mut v) in merged_scan(&local, pred) {
                    let slot = v.get_mut(delta.attr_index).ok_or_else(|| {
                        Error::Schema(format!("delta column {} out of range", delta.attr_index))
                    })?;
                    *slot += delta.amount;
                    read_set.insert(k);
                    write_set.insert(k);
                    local.insert(k, v);
                }
            }
        }
    }
    Ok(ExecOutput { read_set, write_set, writes: local })
}

/// Prediction phase: scores all summary pairs, defers transactions whose
/// predicted-conflict degree reaches the threshold, schedules the rest in
/// tid order. Repeated predicate pairs (hot keys under skew) hit a memo
/// instead of re-running inference.
fn prediction_phase(
    models: &ModelSet,
    batch: &[Transaction],
    defer_threshold: usize,
) -> Result<(Vec<Tid>, BTreeSet<Tid>, usize)> {
    let n = batch.len();
    let mut degree = vec![0usize; n + 1];
    let mut predicted_pairs = 0usize;
    let mut memo: HashMap<(Predicate, Predicate), bool> = HashMap::new();
    for i in 0..n {
        for j in i + 1..n {
            if predicted_pair_conflicts(models, &batch[i], &batch[j], &mut memo)? {
                predicted_pairs += 1;
                degree[i + 1] += 1;
                degree[j + 1] += 1;
            }
        }
    }
    let deferred: BTreeSet<Tid> = (1..=n as Tid)
        .filter(|&t| degree[t as usize] >= defer_threshold)
        .collect();
    let scheduled: Vec<Tid> = (1..=n as Tid).filter(|t| !deferred.contains(t)).collect();
    Ok((scheduled, deferred, predicted_pairs))
}

/// A pair is predicted conflicting when any write-involving summary combo
/// overlaps a populated region.
fn predicted_pair_conflicts(
    models: &ModelSet,
    a: &Transaction,
    b: &Transaction,
    memo: &mut HashMap<(Predicate, Predicate), bool>,
) -> Result<bool> {
    let mut check = |pa: &Predicate, pb: &Predicate| -> Result<bool> {
        if crate::model::predicates_disjoint(pa, pb) {
            return Ok(false);
        }
        if let Some(&hit) = memo.get(&(pa.clone(), pb.clone())) {
            return Ok(hit);
        }
        let result = models.predict_conflict(pa, pb)?;
        memo.insert((pa.clone(), pb.clone()), result);
        Ok(result)
    };
    for pa in &a.write_summary {
        for pb in b.read_summary.iter().chain(&b.write_summary) {
            if check(pa, pb)? {
                return Ok(true);
            }
        }
    }
    for pa in &a.read_summary {
        for pb in &b.write_summary {
            if check(pa, pb)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Execution phase: snapshot execution across the worker pool. Transactions
/// are sharded round-robin by position; outputs merge in tid order so the
/// result is independent of the distribution.
fn execution_phase(
    store: &Store,
    batch: &mut [Transaction],
    scheduled: &[Tid],
    workers: usize,
) -> Result<BTreeSet<Tid>> {
    let mut results: Vec<(Tid, Option<ExecOutput>)> = Vec::with_capacity(scheduled.len());
    let batch_ref: &[Transaction] = batch;
    let shards: Vec<Vec<Tid>> = (0..workers)
        .map(|w| scheduled.iter().copied().skip(w).step_by(workers).collect())
        .collect();

    let mut shard_results: Vec<Vec<(Tid, Result<ExecOutput>)>> = Vec::with_capacity(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                s.spawn(move || {
                    let source = SnapshotSource { snap: store.snapshot() };
                    let mut out = Vec::with_capacity(shard.len());
                    for &tid in shard {
                        let txn = &batch_ref[tid as usize - 1];
                        let result = execute_ops(&source, &txn.ops);
                        if let Ok(exec) = &result {
                            for (k, v) in &exec.writes {
                                // Uncommitted buffer; invisible to snapshots.
                                if let Err(e) =
                                    store.install_version(*k, tid, v.clone(), VersionState::Uncommitted)
                                {
                                    out.push((tid, Err(e)));
                                    continue;
                                }
                            }
                        }
                        out.push((tid, result));
                    }
                    out
                })
            })
            .collect();
        for h in handles {
            shard_results.push(h.join().expect("execution worker panicked"));
        }
    });

    let mut failed = BTreeSet::new();
    let mut merged: BTreeMap<Tid, Result<ExecOutput>> = BTreeMap::new();
    for shard in shard_results {
        for (tid, res) in shard {
            merged.insert(tid, res);
        }
    }
    for (tid, res) in merged {
        match res {
            Ok(exec) => {
                results.push((tid, Some(exec)));
            }
            Err(Error::KeyNotFound(_)) => {
                failed.insert(tid);
            }
            Err(e) => return Err(e),
        }
    }
    for (tid, exec) in results {
        if let Some(exec) = exec {
            batch[tid as usize - 1].record_execution(exec.read_set, exec.write_set);
        }
    }
    Ok(failed)
}

/// Executes a batch on the store's snapshot without committing anything:
/// read/write sets populate and uncommitted versions buffer on the probe
/// store. Lets callers compare validation rules over identical executions.
pub fn execute_for_validation(
    store: &Store,
    batch: &mut [Transaction],
    scheduled: &[Tid],
) -> Result<BTreeSet<Tid>> {
    execution_phase(store, batch, scheduled, 1)
}

/// Commit-phase validation: which executed transactions commit under the
/// protocol's rule. Exposed for rule-comparison tests.
pub fn validate_protocol(
    protocol: Protocol,
    dicts: &mtfs::DependencyDicts,
    executed: &BTreeSet<Tid>,
    n: usize,
) -> Result<(BTreeSet<Tid>, BTreeSet<Tid>)> {
    let rejected: BTreeSet<Tid> = match protocol {
        Protocol::ForeSight => {
            let matrix = mtfs::build_matrix(dicts, n)?;
            mtfs::extract_abort_set(&matrix, dicts).tids
        }
        Protocol::Rule1Only => executed
            .iter()
            .copied()
            .filter(|&t| !mtfs::eligible_rule1(t, dicts))
            .collect(),
        Protocol::Rule2Only => executed
            .iter()
            .copied()
            .filter(|&t| !mtfs::eligible_rule2(t, dicts))
            .collect(),
        Protocol::Aria | Protocol::AriaFB => crate::baselines::aria_validate(dicts, n, true),
        Protocol::Fga => crate::baselines::fga_reorder(dicts, n),
    };
    let rejected: BTreeSet<Tid> = rejected.intersection(executed).copied().collect();
    let committed: BTreeSet<Tid> = executed.difference(&rejected).copied().collect();
    Ok((committed, rejected))
}

/// Fallback phase: deferred, rejected, and failed-retry transactions
/// re-execute serially in ascending tid order over the version chains.
/// Each pre-installs its writes tagged with its tid, then finalizes, so
/// later transactions observe all prior fallback commits; the result equals
/// serial execution on the post-commit state.
fn fallback_phase(
    store: &Store,
    batch: &mut [Transaction],
    fallback: &BTreeSet<Tid>,
) -> Result<(BTreeSet<Tid>, BTreeSet<Tid>)> {
    let mut committed = BTreeSet::new();
    let mut failed = BTreeSet::new();
    for &tid in fallback {
        let txn = &mut batch[tid as usize - 1];
        let source = FallbackSource { store, reader_tid: tid };
        match execute_ops(&source, &txn.ops) {
            Ok(exec) => {
                let keys: Vec<Key> = exec.writes.keys().copied().collect();
                for (k, v) in &exec.writes {
                    store.install_version(*k, tid, v.clone(), VersionState::FallbackPending)?;
                }
                store.finalize_fallback_commit(tid, &keys)?;
                if txn.is_executed() {
                    txn.clear_execution();
                }
                txn.record_execution(exec.read_set, exec.write_set);
                committed.insert(tid);
            }
            Err(Error::KeyNotFound(_)) => {
                failed.insert(tid);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((committed, failed))
}

/// Runs one batch through the five phases. The batch must carry dense tids
/// from 1 and the store must sit at a clean epoch boundary. Transactions
/// are updated in place with their runtime sets.
pub fn run_batch(
    config: &EngineConfig,
    store: &mut Store,
    models: Option<&ModelSet>,
    batch: &mut [Transaction],
) -> Result<BatchOutcome> {
    config.validate()?;
    if !store.at_epoch_boundary() {
        return Err(Error::PhaseOrder("run_batch requires a clean epoch boundary".into()));
    }
    if batch.len() > mtfs::MAX_BATCH {
        return Err(Error::Config(format!("batch of {} exceeds dense-matrix bound", batch.len())));
    }
    for (i, txn) in batch.iter().enumerate() {
        if txn.tid != i as Tid + 1 {
            return Err(Error::Invariant(format!(
                "batch tids must be dense from 1; position {i} holds tid {}",
                txn.tid
            )));
        }
    }
    let n = batch.len();
    let mut metrics = BatchMetrics { batch_size: n, ..BatchMetrics::default() };

    // Phase 1: prediction.
    let t0 = Instant::now();
    let use_prediction =
        config.prediction_enabled && config.protocol.has_fallback() && models.is_some();
    let (scheduled, deferred, predicted_pairs) = if use_prediction {
        prediction_phase(models.expect("checked"), batch, config.defer_threshold)?
    } else {
        ((1..=n as Tid).collect(), BTreeSet::new(), 0)
    };
    metrics.predicted_conflict_pairs = predicted_pairs;
    metrics.deferred_by_prediction = deferred.len();
    metrics.timings.prediction_us = t0.elapsed().as_micros() as u64;

    // Phase 2: snapshot execution.
    let t1 = Instant::now();
    let failed_exec = execution_phase(store, batch, &scheduled, config.worker_threads)?;
    metrics.timings.execution_us = t1.elapsed().as_micros() as u64;

    // Phase 3: validation and commit finalization.
    let t2 = Instant::now();
    let executed_tids: BTreeSet<Tid> = scheduled
        .iter()
        .copied()
        .filter(|t| !failed_exec.contains(t))
        .collect();
    let executed_refs: Vec<Transaction> = executed_tids
        .iter()
        .map(|&t| batch[t as usize - 1].clone())
        .collect();
    let dicts = mtfs::build_dependency_dicts(&executed_refs);
    metrics.actual_conflict_pairs = count_dependency_pairs(&dicts);
    let (committed_main, rejected) = validate_protocol(config.protocol, &dicts, &executed_tids, n)?;
    metrics.reclaimed_versions += store.finalize_main_commits(&committed_main);
    metrics.timings.commit_us = t2.elapsed().as_micros() as u64;

    // Phase 4: fallback (protocols without one carry rejects to the next
    // batch).
    let t3 = Instant::now();
    let mut aborted: BTreeSet<Tid> = BTreeSet::new();
    let mut committed_fallback = BTreeSet::new();
    if config.protocol.has_fallback() {
        let mut fallback_set: BTreeSet<Tid> = deferred.clone();
        fallback_set.extend(rejected.iter().copied());
        fallback_set.extend(failed_exec.iter().copied());
        let (ok, failed_fb) = fallback_phase(store, batch, &fallback_set)?;
        committed_fallback = ok;
        aborted.extend(failed_fb);
        metrics.internally_failed = failed_exec.len() + aborted.len();
    } else {
        aborted.extend(rejected.iter().copied());
        aborted.extend(failed_exec.iter().copied());
        metrics.internally_failed = failed_exec.len();
    }
    metrics.timings.fallback_us = t3.elapsed().as_micros() as u64;

    // Phase 5: garbage collection; committed updates become the next base.
    let t4 = Instant::now();
    metrics.reclaimed_versions += store.garbage_collect(store.epoch() + 1)?;
    metrics.timings.gc_us = t4.elapsed().as_micros() as u64;

    let mut covered = committed_main.clone();
    covered.extend(&committed_fallback);
    covered.extend(&aborted);
    if covered.len() != n || covered.iter().copied().ne(1..=n as Tid) {
        return Err(Error::Invariant(
            "commit/fallback/abort sets do not partition the batch".into(),
        ));
    }
    metrics.commit_rate =
        (committed_main.len() + committed_fallback.len()) as f64 / n.max(1) as f64;

    Ok(BatchOutcome { committed_main, committed_fallback, aborted, metrics })
}

fn count_dependency_pairs(dicts: &mtfs::DependencyDicts) -> usize {
    let mut pairs: BTreeSet<(Tid, Tid)> = BTreeSet::new();
    for (&i, deps) in dicts.raw.iter().chain(dicts.war_waw.iter()) {
        for &j in deps {
            pairs.insert((j, i));
        }
    }
    pairs.len()
}

/// One JSON line per batch for the engine trace log.
#[derive(Serialize)]
struct TraceLine<'a> {
    epoch: u64,
    timings: &'a PhaseTimings,
    committed_main: usize,
    committed_fallback: usize,
    aborted: usize,
    /// Per-transaction disposition by tid: m(ain), f(allback), a(borted).
    disposition: String,
}

/// Drives consecutive epochs over one store: generates fresh transactions,
/// re-enqueues aborted ones at the front of the next batch (lowest tids),
/// and keeps the trained models across batches.
pub struct EpochDriver {
    pub config: EngineConfig,
    pub spec: WorkloadSpec,
    store: Store,
    models: Option<ModelSet>,
    carried: Vec<Transaction>,
    epochs_run: u64,
    trace: Option<Box<dyn std::io::Write + Send>>,
}

/// Cap on per-table rows used to train the prediction models.
const TRAIN_ROW_CAP: usize = 10_000;

impl EpochDriver {
    pub fn new(config: EngineConfig, spec: WorkloadSpec) -> Result<EpochDriver> {
        config.validate()?;
        spec.validate()?;
        let schema = workloads::schema_for(&spec);
        let mut store = Store::new(schema.clone());
        workloads::populate_store(&spec, &mut store)?;

        let models = if config.prediction_enabled && config.protocol.has_fallback() {
            let dump = store.dump();
            let mut per_table = Vec::new();
            for (table_id, ts) in schema.tables.iter().enumerate() {
                let rows = dump.get(&ts.name).cloned().unwrap_or_default();
                let size = rows.len() as u64;
                let step = (rows.len() / TRAIN_ROW_CAP).max(1);
                let sampled: Vec<AttributeVector> =
                    rows.into_values().step_by(step).take(TRAIN_ROW_CAP).collect();
                per_table.push((table_id as u32, size, sampled));
            }
            Some(ModelSet::train_per_table(&schema, &per_table, &config.aspn)?)
        } else {
            None
        };

        Ok(EpochDriver { config, spec, store, models, carried: Vec::new(), epochs_run: 0, trace: None })
    }

    pub fn with_trace(mut self, sink: Box<dyn std::io::Write + Send>) -> Self {
        self.trace = Some(sink);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn models(&self) -> Option<&ModelSet> {
        self.models.as_ref()
    }

    pub fn epochs_run(&self) -> u64 {
        self.epochs_run
    }

    /// Builds the next batch: carried retries first (lowest tids), then
    /// fresh transactions from the deterministic per-epoch stream.
    pub fn next_batch(&mut self) -> Result<Vec<Transaction>> {
        let carried_n = self.carried.len().min(self.config.batch_size);
        let fresh_n = self.config.batch_size - carried_n;
        let mut batch: Vec<Transaction> = self.carried.drain(..carried_n).collect();
        for (i, txn) in batch.iter_mut().enumerate() {
            txn.reset_for_retry(i as Tid + 1);
        }
        let fresh = workloads::gen_batch(&self.spec, fresh_n, self.epochs_run)?;
        for (i, mut txn) in fresh.into_iter().enumerate() {
            txn.reset_for_retry((carried_n + i) as Tid + 1);
            batch.push(txn);
        }
        Ok(batch)
    }

    /// Runs one epoch; returns the outcome and the executed batch.
    pub fn run_epoch(&mut self) -> Result<(BatchOutcome, Vec<Transaction>)> {
        let mut batch = self.next_batch()?;
        let outcome = run_batch(&self.config, &mut self.store, self.models.as_ref(), &mut batch)?;
        self.carried = outcome
            .aborted
            .iter()
            .map(|&t| batch[t as usize - 1].clone())
            .collect();
        if let Some(sink) = &mut self.trace {
            let disposition: String = (1..=batch.len() as Tid)
                .map(|t| {
                    if outcome.committed_main.contains(&t) {
                        'm'
                    } else if outcome.committed_fallback.contains(&t) {
                        'f'
                    } else {
                        'a'
                    }
                })
                .collect();
            let line = TraceLine {
                epoch: self.epochs_run,
                timings: &outcome.metrics.timings,
                committed_main: outcome.committed_main.len(),
                committed_fallback: outcome.committed_fallback.len(),
                aborted: outcome.aborted.len(),
                disposition,
            };
            writeln!(sink, "{}", serde_json::to_string(&line)?)?;
        }
        self.epochs_run += 1;
        Ok((outcome, batch))
    }
}
