//! Shared data model: keys, records, predicates, transactions, dependency
//! kinds, and the pure functions over them (predicate intersection,
//! dependency classification).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Table identifier; index into the schema's table list.
pub type TableId = u32;

/// Batch-local transaction id, dense from 1 in sequencing order. Also the
/// version timestamp within an epoch.
pub type Tid = u32;

/// Batch counter; one epoch per batch round.
pub type Epoch = u64;

/// Per-record attribute values. Length always equals the owning table's
/// attribute count; validated at store boundaries.
pub type AttributeVector = Vec<i64>;

/// Identity of a record: `(table_id, primary_key)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key {
    pub table_id: TableId,
    pub primary_key: u64,
}

impl Key {
    pub fn new(table_id: TableId, primary_key: u64) -> Self {
        Key { table_id, primary_key }
    }
}

/// Closed integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: i64,
    pub hi: i64,
}

impl Interval {
    pub fn new(lo: i64, hi: i64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: i64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_valid(&self) -> bool {
        self.lo <= self.hi
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Number of integers covered; zero when inverted.
    pub fn width(&self) -> u64 {
        if self.is_valid() {
            (self.hi - self.lo) as u64 + 1
        } else {
            0
        }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }
}

/// Per-attribute axis-aligned box over one table. The canonical EMPTY
/// predicate is a distinguished value rather than any inverted interval,
/// so equality is stable in tests.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub table_id: TableId,
    /// `None` is the canonical EMPTY predicate.
    bounds: Option<Vec<Interval>>,
}

impl Predicate {
    /// Builds a predicate, canonicalizing to EMPTY if any interval is inverted.
    pub fn new(table_id: TableId, bounds: Vec<Interval>) -> Self {
        if bounds.iter().all(Interval::is_valid) {
            Predicate { table_id, bounds: Some(bounds) }
        } else {
            Predicate { table_id, bounds: None }
        }
    }

    pub fn empty(table_id: TableId) -> Self {
        Predicate { table_id, bounds: None }
    }

    /// Full-domain predicate for a table schema.
    pub fn full(table_id: TableId, schema: &TableSchema) -> Self {
        Predicate { table_id, bounds: Some(schema.domains.clone()) }
    }

    /// Single-key point predicate on the designated key attribute
    /// (attribute 0 mirrors the primary key in generated tables); all other
    /// attributes unconstrained.
    pub fn point_on_key(key: Key, schema: &TableSchema) -> Self {
        let mut bounds = schema.domains.clone();
        bounds[0] = Interval::point(key.primary_key as i64);
        Predicate { table_id: key.table_id, bounds: Some(bounds) }
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_none()
    }

    pub fn bounds(&self) -> Option<&[Interval]> {
        self.bounds.as_deref()
    }

    /// True when the record's attribute values satisfy every bound.
    pub fn matches(&self, values: &[i64]) -> bool {
        match &self.bounds {
            None => false,
            Some(bounds) => {
                bounds.len() == values.len()
                    && bounds.iter().zip(values).all(|(b, v)| b.contains(*v))
            }
        }
    }
}

/// Allocation-free disjointness test: true when the intersection would be
/// EMPTY. Hot path for pairwise conflict prediction over large batches.
pub fn predicates_disjoint(p: &Predicate, q: &Predicate) -> bool {
    match (p.bounds(), q.bounds()) {
        (Some(pb), Some(qb)) => pb
            .iter()
            .zip(qb)
            .any(|(a, b)| a.lo.max(b.lo) > a.hi.min(b.hi)),
        _ => true,
    }
}

/// Per-attribute interval intersection (lower bounds maxed, upper bounds
/// minned); EMPTY if any attribute's bounds invert.
pub fn intersect_predicates(p: &Predicate, q: &Predicate) -> Result<Predicate> {
    if p.table_id != q.table_id {
        return Err(Error::CrossTableIntersection(p.table_id, q.table_id));
    }
    let (pb, qb) = match (p.bounds(), q.bounds()) {
        (Some(pb), Some(qb)) => (pb, qb),
        _ => return Ok(Predicate::empty(p.table_id)),
    };
    if pb.len() != qb.len() {
        return Err(Error::Schema(format!(
            "predicate arity mismatch: {} vs {}",
            pb.len(),
            qb.len()
        )));
    }
    let mut out = Vec::with_capacity(pb.len());
    for (a, b) in pb.iter().zip(qb) {
        match a.intersect(b) {
            Some(iv) => out.push(iv),
            None => return Ok(Predicate::empty(p.table_id)),
        }
    }
    Ok(Predicate::new(p.table_id, out))
}

/// Additive update applied to one attribute of each record matching a
/// range-write predicate; the read-modify-write primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub attr_index: usize,
    pub amount: i64,
}

/// One transaction operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Op {
    PointRead(Key),
    RangeRead(Predicate),
    PointWrite(Key, AttributeVector),
    RangeWrite(Predicate, Delta),
}

/// The unit of scheduling: declared predicate summaries plus the operation
/// list, with runtime read/write key sets populated exactly once by the
/// executing worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tid: Tid,
    pub ops: Vec<Op>,
    pub read_summary: Vec<Predicate>,
    pub write_summary: Vec<Predicate>,
    pub read_set: BTreeSet<Key>,
    pub write_set: BTreeSet<Key>,
    executed: bool,
}

impl Transaction {
    pub fn new(tid: Tid, ops: Vec<Op>, read_summary: Vec<Predicate>, write_summary: Vec<Predicate>) -> Self {
        Transaction {
            tid,
            ops,
            read_summary,
            write_summary,
            read_set: BTreeSet::new(),
            write_set: BTreeSet::new(),
            executed: false,
        }
    }

    pub fn is_executed(&self) -> bool {
        self.executed
    }

    /// Populates the runtime sets; called exactly once by the executing worker.
    pub fn record_execution(&mut self, read_set: BTreeSet<Key>, write_set: BTreeSet<Key>) {
        debug_assert!(!self.executed, "transaction executed twice");
        self.read_set = read_set;
        self.write_set = write_set;
        self.executed = true;
    }

    /// Resets runtime state so the transaction can re-enter a later batch.
    pub fn reset_for_retry(&mut self, new_tid: Tid) {
        self.tid = new_tid;
        self.clear_execution();
    }

    /// Clears the runtime sets ahead of re-execution (fallback keeps the tid).
    pub fn clear_execution(&mut self) {
        self.read_set.clear();
        self.write_set.clear();
        self.executed = false;
    }
}

/// Dependency classification between an earlier and a later transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DependencyKind {
    Raw,
    War,
    Waw,
    Ind,
}

/// Returns every dependency kind that holds between `earlier` and `later`
/// (`{IND}` when none do): RAW iff R(later) ∩ W(earlier) ≠ ∅, WAR iff
/// W(later) ∩ R(earlier) ≠ ∅, WAW iff W(later) ∩ W(earlier) ≠ ∅.
pub fn classify_dependency(earlier: &Transaction, later: &Transaction) -> Result<BTreeSet<DependencyKind>> {
    if !earlier.is_executed() {
        return Err(Error::NotExecuted(earlier.tid));
    }
    if !later.is_executed() {
        return Err(Error::NotExecuted(later.tid));
    }
    debug_assert!(earlier.tid < later.tid);
    let mut kinds = BTreeSet::new();
    if !later.read_set.is_disjoint(&earlier.write_set) {
        kinds.insert(DependencyKind::Raw);
    }
    if !later.write_set.is_disjoint(&earlier.read_set) {
        kinds.insert(DependencyKind::War);
    }
    if !later.write_set.is_disjoint(&earlier.write_set) {
        kinds.insert(DependencyKind::Waw);
    }
    if kinds.is_empty() {
        kinds.insert(DependencyKind::Ind);
    }
    Ok(kinds)
}

/// One table's declared layout: attribute names, per-attribute closed
/// domains, and the initial record count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub attributes: Vec<String>,
    pub domains: Vec<Interval>,
    pub record_count: u64,
}

impl TableSchema {
    pub fn attr_count(&self) -> usize {
        self.attributes.len()
    }
}

/// Declared schema for the whole store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableSchema>,
}

impl Schema {
    pub fn table(&self, id: TableId) -> Result<&TableSchema> {
        self.tables
            .get(id as usize)
            .ok_or_else(|| Error::Schema(format!("unknown table id {id}")))
    }

    pub fn from_json(json: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(json)?;
        for t in &schema.tables {
            if t.attributes.len() != t.domains.len() {
                return Err(Error::Schema(format!(
                    "table {}: {} attributes but {} domains",
                    t.name,
                    t.attributes.len(),
                    t.domains.len()
                )));
            }
            if t.attributes.is_empty() {
                return Err(Error::Schema(format!("table {} has no attributes", t.name)));
            }
            if !t.domains.iter().all(Interval::is_valid) {
                return Err(Error::Schema(format!("table {} has an inverted domain", t.name)));
            }
        }
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(table: TableId, bounds: &[(i64, i64)]) -> Predicate {
        Predicate::new(table, bounds.iter().map(|&(l, h)| Interval::new(l, h)).collect())
    }

    fn executed(tid: Tid, reads: &[u64], writes: &[u64]) -> Transaction {
        let mut t = Transaction::new(tid, vec![], vec![], vec![]);
        t.record_execution(
            reads.iter().map(|&k| Key::new(0, k)).collect(),
            writes.iter().map(|&k| Key::new(0, k)).collect(),
        );
        t
    }

    // Worked five-attribute intersection over [A1, B1, B2, A2, B3].
    #[test]
    fn intersect_worked_example() {
        let q1 = pred(0, &[(1, 8), (1, 3), (1, 8), (2, 7), (2, 5)]);
        let q2 = pred(0, &[(1, 6), (1, 8), (7, 8), (6, 7), (1, 10)]);
        let q = intersect_predicates(&q1, &q2).unwrap();
        assert_eq!(q, pred(0, &[(1, 6), (1, 3), (7, 8), (6, 7), (2, 5)]));
    }

    #[test]
    fn intersect_idempotent() {
        let p = pred(0, &[(1, 3), (2, 7)]);
        assert_eq!(intersect_predicates(&p, &p).unwrap(), p);
    }

    #[test]
    fn intersect_disjoint_is_empty() {
        let p = pred(0, &[(0, 2)]);
        let q = pred(0, &[(5, 9)]);
        let r = intersect_predicates(&p, &q).unwrap();
        assert!(r.is_empty());
        assert_eq!(r, Predicate::empty(0));
    }

    #[test]
    fn intersect_cross_table_is_error() {
        let p = pred(0, &[(0, 2)]);
        let q = pred(1, &[(0, 2)]);
        assert!(matches!(
            intersect_predicates(&p, &q),
            Err(Error::CrossTableIntersection(0, 1))
        ));
    }

    #[test]
    fn inverted_interval_canonicalizes_to_empty() {
        let p = Predicate::new(0, vec![Interval::new(5, 1)]);
        assert!(p.is_empty());
        assert_eq!(p, Predicate::empty(0));
    }

    #[test]
    fn classify_raw_single_key() {
        let t1 = executed(1, &[], &[5]);
        let t2 = executed(2, &[5], &[]);
        let kinds = classify_dependency(&t1, &t2).unwrap();
        assert_eq!(kinds, BTreeSet::from([DependencyKind::Raw]));
    }

    #[test]
    fn classify_disjoint_is_ind() {
        let t1 = executed(1, &[1], &[2]);
        let t2 = executed(2, &[3], &[4]);
        let kinds = classify_dependency(&t1, &t2).unwrap();
        assert_eq!(kinds, BTreeSet::from([DependencyKind::Ind]));
    }

    #[test]
    fn classify_all_three_kinds() {
        // W(T1)={1}, R(T1)={2}; R(T2)={1}, W(T2)={2,1}.
        let t1 = executed(1, &[2], &[1]);
        let t2 = executed(2, &[1], &[2, 1]);
        let kinds = classify_dependency(&t1, &t2).unwrap();
        assert_eq!(
            kinds,
            BTreeSet::from([DependencyKind::Raw, DependencyKind::War, DependencyKind::Waw])
        );
    }

    #[test]
    fn classify_before_execution_is_error() {
        let t1 = executed(1, &[], &[5]);
        let t2 = Transaction::new(2, vec![], vec![], vec![]);
        assert!(matches!(classify_dependency(&t1, &t2), Err(Error::NotExecuted(2))));
    }

    #[test]
    fn classify_matches_brute_force_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xC1A551F7);
        for _ in 0..1000 {
            let draw = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<u64> {
                let n = rng.gen_range(0..6);
                (0..n).map(|_| rng.gen_range(0..10)).collect()
            };
            let (r1, w1, r2, w2) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let t1 = executed(1, &r1, &w1);
            let t2 = executed(2, &r2, &w2);
            let kinds = classify_dependency(&t1, &t2).unwrap();

            // Brute-force set-intersection oracle over raw key lists.
            let hit = |a: &[u64], b: &[u64]| a.iter().any(|x| b.contains(x));
            let mut expect = BTreeSet::new();
            if hit(&r2, &w1) {
                expect.insert(DependencyKind::Raw);
            }
            if hit(&w2, &r1) {
                expect.insert(DependencyKind::War);
            }
            if hit(&w2, &w1) {
                expect.insert(DependencyKind::Waw);
            }
            if expect.is_empty() {
                expect.insert(DependencyKind::Ind);
            }
            assert_eq!(kinds, expect);
        }
    }

    #[test]
    fn schema_json_round_trip_and_validation() {
        let schema = Schema {
            tables: vec![TableSchema {
                name: "usertable".into(),
                attributes: (0..3).map(|i| format!("f{i}")).collect(),
                domains: vec![Interval::new(0, 99); 3],
                record_count: 100,
            }],
        };
        let parsed = Schema::from_json(&schema.to_json()).unwrap();
        assert_eq!(parsed, schema);

        let bad = r#"{"tables":[{"name":"t","attributes":["a"],"domains":[],"record_count":1}]}"#;
        assert!(Schema::from_json(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pred() -> impl Strategy<Value = Predicate> {
            proptest::collection::vec((-20i64..20, -20i64..20), 3).prop_map(|ivs| {
                Predicate::new(0, ivs.into_iter().map(|(a, b)| Interval::new(a, b)).collect())
            })
        }

        proptest! {
            #[test]
            fn intersect_commutative(p in arb_pred(), q in arb_pred()) {
                let pq = intersect_predicates(&p, &q).unwrap();
                let qp = intersect_predicates(&q, &p).unwrap();
                prop_assert_eq!(pq, qp);
            }

            #[test]
            fn disjoint_check_agrees_with_intersection(p in arb_pred(), q in arb_pred()) {
                let empty = intersect_predicates(&p, &q).unwrap().is_empty();
                prop_assert_eq!(predicates_disjoint(&p, &q), empty);
            }

            #[test]
            fn intersect_associative(p in arb_pred(), q in arb_pred(), r in arb_pred()) {
                let a = intersect_predicates(&intersect_predicates(&p, &q).unwrap(), &r).unwrap();
                let b = intersect_predicates(&p, &intersect_predicates(&q, &r).unwrap()).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
