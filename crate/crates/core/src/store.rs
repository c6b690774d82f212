//! Multi-version in-memory storage.
//!
//! Each table maps primary keys to a base value (the snapshot) plus an
//! in-flight version chain for the current epoch. Execution-phase reads
//! always hit the base and never block; writers append uncommitted versions
//! to per-key chains. Commit finalization merges the committed versions into
//! the base in TID order and drops the rest, so the fallback phase sees the
//! post-commit state as its base and uses per-TID chain visibility only
//! among fallback transactions. Garbage collection collapses every chain
//! back to a single base value and advances the epoch.
//!
//! Within one epoch all version timestamps share the epoch component, so a
//! chain orders versions by TID alone; timestamps are `(epoch, tid)` pairs
//! ordered lexicographically across batches.

use std::collections::BTreeMap;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeVector, Epoch, Key, Predicate, Schema, TableId, Tid};

/// Lifecycle of an installed version within the current epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionState {
    /// Buffered by the execution phase; invisible everywhere until commit.
    Uncommitted,
    /// Pre-installed by a fallback transaction; visible to fallback readers
    /// with higher TIDs, never to snapshot reads.
    FallbackPending,
    /// Commit-finalized.
    Committed,
}

/// One version node: value plus timestamp metadata. The predecessor is the
/// next older entry in the owning chain, terminating at the base version.
#[derive(Debug, Clone)]
pub struct Version {
    pub tid: Tid,
    pub value: AttributeVector,
    pub state: VersionState,
}

/// Per-record chain of versions installed in the current epoch, ordered by
/// ascending TID; the head is the newest version. The base version lives in
/// the table's base map.
#[derive(Debug, Default, Clone)]
pub struct VersionChain {
    versions: Vec<Version>,
}

impl VersionChain {
    /// Newest version, if any was installed this epoch.
    pub fn head(&self) -> Option<&Version> {
        self.versions.last()
    }

    /// Predecessor of the version at `tid`, or `None` when the base version
    /// is next.
    pub fn predecessor(&self, tid: Tid) -> Option<&Version> {
        let idx = self.versions.iter().position(|v| v.tid == tid)?;
        if idx == 0 {
            None
        } else {
            Some(&self.versions[idx - 1])
        }
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    fn install(&mut self, tid: Tid, value: AttributeVector, state: VersionState) -> Result<()> {
        match self.versions.binary_search_by_key(&tid, |v| v.tid) {
            Ok(_) => Err(Error::DuplicateInstall(tid)),
            Err(pos) => {
                self.versions.insert(pos, Version { tid, value, state });
                Ok(())
            }
        }
    }

    /// Greatest TID strictly below `reader_tid` among committed or
    /// fallback-pending versions.
    fn visible_before(&self, reader_tid: Tid) -> Option<&Version> {
        self.versions
            .iter()
            .rev()
            .find(|v| v.tid < reader_tid && v.state != VersionState::Uncommitted)
    }

    /// Newest committed version, if any.
    fn latest_committed(&self) -> Option<&Version> {
        self.versions.iter().rev().find(|v| v.state == VersionState::Committed)
    }
}

struct Table {
    /// Snapshot-visible base values; frozen during execution and fallback,
    /// mutated only by finalization and GC (which take `&mut Store`).
    base: BTreeMap<u64, AttributeVector>,
    /// In-flight chains for the current epoch. DashMap entry locking
    /// serializes same-chain installs; distinct chains proceed in parallel.
    chains: DashMap<u64, VersionChain>,
}

/// JSON store dump: table name → primary key → attribute vector.
pub type StoreDump = BTreeMap<String, BTreeMap<u64, AttributeVector>>;

/// The multi-version store.
pub struct Store {
    schema: Schema,
    tables: Vec<Table>,
    epoch: Epoch,
}

/// A consistent view of the store at one epoch. All reads through a snapshot
/// return the epoch-base values regardless of concurrent version installs.
#[derive(Clone, Copy)]
pub struct Snapshot<'a> {
    store: &'a Store,
    pub epoch: Epoch,
}

impl<'a> Snapshot<'a> {
    pub fn read(&self, key: Key) -> Result<&'a AttributeVector> {
        self.store.snapshot_read(key)
    }

    /// All base records matching the predicate, in key order.
    pub fn scan(&self, pred: &Predicate) -> Vec<(Key, &'a AttributeVector)> {
        self.store.snapshot_scan(pred)
    }
}

impl Store {
    /// Empty store over a schema; populate via [`Store::load_dump`] or
    /// [`Store::insert_base`].
    pub fn new(schema: Schema) -> Store {
        let tables = schema
            .tables
            .iter()
            .map(|_| Table { base: BTreeMap::new(), chains: DashMap::new() })
            .collect();
        Store { schema, tables, epoch: 0 }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    /// Seeds a base record outside any epoch (initial load).
    pub fn insert_base(&mut self, key: Key, value: AttributeVector) -> Result<()> {
        let t = self.table_mut(key.table_id)?;
        t.base.insert(key.primary_key, value);
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot<'_> {
        Snapshot { store: self, epoch: self.epoch }
    }

    /// Base value for the current epoch; unaffected by uncommitted versions.
    pub fn snapshot_read(&self, key: Key) -> Result<&AttributeVector> {
        let t = self.table(key.table_id)?;
        t.base.get(&key.primary_key).ok_or(Error::KeyNotFound(key))
    }

    fn snapshot_scan(&self, pred: &Predicate) -> Vec<(Key, &AttributeVector)> {
        let Ok(t) = self.table(pred.table_id) else { return vec![] };
        t.base
            .iter()
            .filter(|(_, v)| pred.matches(v))
            .map(|(pk, v)| (Key::new(pred.table_id, *pk), v))
            .collect()
    }

    /// Appends a new version to the key's chain (creating the chain for
    /// freshly inserted keys). The new version becomes the head; the old
    /// head becomes its predecessor.
    pub fn install_version(&self, key: Key, tid: Tid, value: AttributeVector, state: VersionState) -> Result<()> {
        let t = self.table(key.table_id)?;
        let expected = self.schema.table(key.table_id)?.attr_count();
        if value.len() != expected {
            return Err(Error::Schema(format!(
                "value arity {} does not match table arity {expected}",
                value.len()
            )));
        }
        t.chains.entry(key.primary_key).or_default().install(tid, value, state)
    }

    /// Fallback read rule: the latest version whose TID strictly precedes
    /// the reader's, considering committed and fallback-pending versions
    /// only; falls back to the base value when no such version exists.
    pub fn read_visible(&self, key: Key, reader_tid: Tid) -> Result<AttributeVector> {
        let t = self.table(key.table_id)?;
        if let Some(chain) = t.chains.get(&key.primary_key) {
            if let Some(v) = chain.visible_before(reader_tid) {
                return Ok(v.value.clone());
            }
        }
        t.base
            .get(&key.primary_key)
            .cloned()
            .ok_or(Error::KeyNotFound(key))
    }

    /// Range scan with fallback visibility: the union of base keys and
    /// chain-only keys, each resolved through [`Store::read_visible`]
    /// semantics, filtered by the predicate. Key order.
    pub fn fallback_scan(&self, pred: &Predicate, reader_tid: Tid) -> Vec<(Key, AttributeVector)> {
        let Ok(t) = self.table(pred.table_id) else { return vec![] };
        let mut keys: Vec<u64> = t.base.keys().copied().collect();
        let mut extra: Vec<u64> = t
            .chains
            .iter()
            .filter(|e| !t.base.contains_key(e.key()))
            .map(|e| *e.key())
            .collect();
        extra.sort_unstable();
        keys.extend(extra);
        keys.sort_unstable();

        let mut out = Vec::new();
        for pk in keys {
            let visible = t
                .chains
                .get(&pk)
                .and_then(|c| c.visible_before(reader_tid).map(|v| v.value.clone()))
                .or_else(|| t.base.get(&pk).cloned());
            if let Some(v) = visible {
                if pred.matches(&v) {
                    out.push((Key::new(pred.table_id, pk), v));
                }
            }
        }
        out
    }

    /// Runs `f` on the key's chain, if one exists this epoch.
    pub fn with_chain<R>(&self, key: Key, f: impl FnOnce(&VersionChain) -> R) -> Option<R> {
        let t = self.table(key.table_id).ok()?;
        t.chains.get(&key.primary_key).map(|c| f(&c))
    }

    /// Marks a fallback transaction's pending versions committed. Called in
    /// ascending TID order by the fallback phase.
    pub fn finalize_fallback_commit(&self, tid: Tid, keys: &[Key]) -> Result<()> {
        for &key in keys {
            let t = self.table(key.table_id)?;
            let mut chain = t
                .chains
                .get_mut(&key.primary_key)
                .ok_or(Error::KeyNotFound(key))?;
            let v = chain
                .versions
                .iter_mut()
                .find(|v| v.tid == tid)
                .ok_or_else(|| Error::Invariant(format!("no pending version for tid {tid}")))?;
            if v.state != VersionState::FallbackPending {
                return Err(Error::Invariant(format!(
                    "fallback finalize of tid {tid} found state {:?}",
                    v.state
                )));
            }
            v.state = VersionState::Committed;
        }
        Ok(())
    }

    /// Commit finalization for the main round: flips the committed
    /// transactions' versions and merges them into the base in TID order, so
    /// the committed updates become the next base values. Every other
    /// in-flight version is dropped. Returns the number of versions removed
    /// from chains.
    pub fn finalize_main_commits(&mut self, committed: &std::collections::BTreeSet<Tid>) -> usize {
        let mut removed = 0;
        for t in &mut self.tables {
            let mut stale = Vec::new();
            for mut entry in t.chains.iter_mut() {
                let pk = *entry.key();
                let chain = entry.value_mut();
                removed += chain.versions.len();
                // Ascending-TID merge keeps the highest committed writer as
                // the surviving base value.
                for v in &chain.versions {
                    if committed.contains(&v.tid) {
                        t.base.insert(pk, v.value.clone());
                    }
                }
                stale.push(pk);
            }
            for pk in stale {
                t.chains.remove(&pk);
            }
        }
        removed
    }

    /// Epoch-based garbage collection. Requires every fallback transaction
    /// of epochs below `min_active_epoch` to have finished: pending versions
    /// or a lagging boundary are phase-order violations. Merges the latest
    /// committed version of each chain into the base, removes versions from
    /// aborted transactions, collapses every chain to the single new base
    /// version, and advances the epoch. Returns the reclaimed version count.
    pub fn garbage_collect(&mut self, min_active_epoch: Epoch) -> Result<usize> {
        if min_active_epoch <= self.epoch {
            return Err(Error::PhaseOrder(format!(
                "gc at epoch {} requires min active epoch > {}, got {min_active_epoch}",
                self.epoch, self.epoch
            )));
        }
        for t in &self.tables {
            for chain in t.chains.iter() {
                if chain.versions.iter().any(|v| v.state == VersionState::FallbackPending) {
                    return Err(Error::PhaseOrder(
                        "gc with unfinalized fallback versions".into(),
                    ));
                }
            }
        }
        let mut reclaimed = 0;
        for t in &mut self.tables {
            let mut stale = Vec::new();
            for entry in t.chains.iter() {
                let pk = *entry.key();
                let chain = entry.value();
                reclaimed += chain.versions.len();
                if let Some(v) = chain.latest_committed() {
                    t.base.insert(pk, v.value.clone());
                }
                stale.push(pk);
            }
            for pk in stale {
                t.chains.remove(&pk);
            }
        }
        self.epoch += 1;
        Ok(reclaimed)
    }

    /// Number of in-flight versions across all chains (zero at every clean
    /// epoch boundary).
    pub fn version_count(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.chains.iter().map(|c| c.versions.len()).sum::<usize>())
            .sum()
    }

    /// True when no chains are live (clean epoch boundary).
    pub fn at_epoch_boundary(&self) -> bool {
        self.tables.iter().all(|t| t.chains.is_empty())
    }

    /// Base-state dump (table name → key → attribute vector).
    pub fn dump(&self) -> StoreDump {
        self.schema
            .tables
            .iter()
            .zip(&self.tables)
            .map(|(ts, t)| (ts.name.clone(), t.base.clone()))
            .collect()
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump()).expect("dump serializes")
    }

    /// Replaces the base state from a dump; table names must match the schema.
    pub fn load_dump(&mut self, dump: &StoreDump) -> Result<()> {
        for (name, rows) in dump {
            let idx = self
                .schema
                .tables
                .iter()
                .position(|t| &t.name == name)
                .ok_or_else(|| Error::Schema(format!("dump table {name} not in schema")))?;
            let arity = self.schema.tables[idx].attr_count();
            if let Some(bad) = rows.values().find(|v| v.len() != arity) {
                return Err(Error::Schema(format!(
                    "dump table {name} row arity {} != {arity}",
                    bad.len()
                )));
            }
            self.tables[idx].base = rows.clone();
            self.tables[idx].chains.clear();
        }
        Ok(())
    }

    fn table(&self, id: TableId) -> Result<&Table> {
        self.tables
            .get(id as usize)
            .ok_or_else(|| Error::Schema(format!("unknown table id {id}")))
    }

    fn table_mut(&mut self, id: TableId) -> Result<&mut Table> {
        self.tables
            .get_mut(id as usize)
            .ok_or_else(|| Error::Schema(format!("unknown table id {id}")))
    }
}

/// Serializable version-state tag for debug dumps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum VersionTag {
    Uncommitted,
    FallbackPending,
    Committed,
}
