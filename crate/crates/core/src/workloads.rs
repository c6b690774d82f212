//! Deterministic synthetic workload generation: YCSB-like key-value batches
//! with Zipfian skew, a contention-faithful TPC-C-lite order mix, and
//! correlated-table generators for model evaluation.
//!
//! Generators are pure given (spec, epoch): every transaction derives its
//! own RNG from (seed, epoch, index), so any prefix of a batch is stable
//! regardless of how many transactions a caller consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeVector, Delta, Epoch, Interval, Key, Op, Predicate, Schema, TableId, TableSchema,
    Transaction,
};
use crate::store::Store;

/// YCSB value payloads carry ten numeric columns; column 0 mirrors the
/// primary key so point accesses map onto degenerate predicates.
pub const YCSB_COLUMNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkloadKind {
    YcsbA,
    YcsbB,
    TpccLite,
    AspnSynthetic,
}

/// Workload shape shared by the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub partitions: u32,
    pub keys_per_partition: u64,
    pub read_fraction: f64,
    pub ops_per_txn: usize,
    pub zipf_theta: f64,
    pub rng_seed: u64,
}

impl WorkloadSpec {
    pub fn ycsb_a(partitions: u32, keys_per_partition: u64, theta: f64, seed: u64) -> Self {
        WorkloadSpec {
            kind: WorkloadKind::YcsbA,
            partitions,
            keys_per_partition,
            read_fraction: 0.5,
            ops_per_txn: 10,
            zipf_theta: theta,
            rng_seed: seed,
        }
    }

    pub fn ycsb_b(partitions: u32, keys_per_partition: u64, theta: f64, seed: u64) -> Self {
        WorkloadSpec { read_fraction: 0.95, kind: WorkloadKind::YcsbB, ..Self::ycsb_a(partitions, keys_per_partition, theta, seed) }
    }

    pub fn tpcc_lite(partitions: u32, seed: u64) -> Self {
        WorkloadSpec {
            kind: WorkloadKind::TpccLite,
            partitions,
            keys_per_partition: 0,
            read_fraction: 0.0,
            ops_per_txn: 0,
            zipf_theta: 0.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.zipf_theta) {
            return Err(Error::Config(format!("zipf theta {} outside [0,1)", self.zipf_theta)));
        }
        if self.partitions == 0 {
            return Err(Error::Config("partitions must be positive".into()));
        }
        match self.kind {
            WorkloadKind::YcsbA if (self.read_fraction - 0.5).abs() > 1e-12 => {
                Err(Error::Config("YCSB-A requires read_fraction 0.5".into()))
            }
            WorkloadKind::YcsbB if (self.read_fraction - 0.95).abs() > 1e-12 => {
                Err(Error::Config("YCSB-B requires read_fraction 0.95".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Zipfian sampler over `[0, n)` with probability ∝ 1/(rank+1)^theta,
/// backed by a precomputed CDF and binary search. theta = 0 is uniform.
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: u64, theta: f64) -> Result<ZipfSampler> {
        if n == 0 {
            return Err(Error::Config("zipf domain must be nonempty".into()));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::Config(format!("zipf theta {theta} outside [0,1)")));
        }
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0;
        for rank in 0..n {
            acc += 1.0 / ((rank + 1) as f64).powf(theta);
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        Ok(ZipfSampler { cdf })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u) as u64
    }
}

/// Table ids for the TPC-C-lite layout.
pub mod tpcc {
    use super::TableId;
    pub const WAREHOUSE: TableId = 0;
    pub const DISTRICT: TableId = 1;
    pub const STOCK: TableId = 2;
    pub const ORDERS: TableId = 3;
    pub const ITEMS_PER_PARTITION: u64 = 1000;
}

/// Schema for a YCSB-style single table.
pub fn ycsb_schema(spec: &WorkloadSpec) -> Schema {
    let total = spec.partitions as u64 * spec.keys_per_partition;
    let mut domains = vec![Interval::new(0, 1_000_000); YCSB_COLUMNS];
    domains[0] = Interval::new(0, total.max(1) as i64 - 1);
    Schema {
        tables: vec![TableSchema {
            name: "usertable".into(),
            attributes: (0..YCSB_COLUMNS).map(|i| format!("field{i}")).collect(),
            domains,
            record_count: total,
        }],
    }
}

/// Schema for the TPC-C-lite layout: warehouse and district rows per
/// partition, a stock table, and an initially empty orders table.
pub fn tpcc_schema(spec: &WorkloadSpec) -> Schema {
    let p = spec.partitions as u64;
    let stock_rows = p * tpcc::ITEMS_PER_PARTITION;
    let table = |name: &str, attrs: usize, rows: u64, key_hi: i64| TableSchema {
        name: name.into(),
        attributes: (0..attrs).map(|i| format!("c{i}")).collect(),
        domains: {
            let mut d = vec![Interval::new(0, 1_000_000); attrs];
            d[0] = Interval::new(0, key_hi.max(0));
            d
        },
        record_count: rows,
    };
    Schema {
        tables: vec![
            table("warehouse", 3, p, p as i64 - 1),
            table("district", 3, p, p as i64 - 1),
            table("stock", 3, stock_rows, stock_rows as i64 - 1),
            // Orders grow by insertion; leave key headroom.
            table("orders", 3, 0, i64::MAX),
        ],
    }
}

pub fn schema_for(spec: &WorkloadSpec) -> Schema {
    match spec.kind {
        WorkloadKind::TpccLite => tpcc_schema(spec),
        _ => ycsb_schema(spec),
    }
}

/// Populates a store with the workload's initial records. Column 0 mirrors
/// the primary key; remaining columns are seeded numerics.
pub fn populate_store(spec: &WorkloadSpec, store: &mut Store) -> Result<()> {
    let schema = store.schema().clone();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.rng_seed ^ 0x9E3779B97F4A7C15);
    for (table_id, ts) in schema.tables.iter().enumerate() {
        for pk in 0..ts.record_count {
            let mut row: AttributeVector = Vec::with_capacity(ts.attr_count());
            row.push(pk as i64);
            for col in 1..ts.attr_count() {
                let d = ts.domains[col];
                let _ = col;
                row.push(rng.gen_range(d.lo..=d.hi));
            }
            store.insert_base(Key::new(table_id as TableId, pk), row)?;
        }
    }
    Ok(())
}

fn txn_rng(seed: u64, epoch: Epoch, index: usize) -> ChaCha12Rng {
    // splitmix-style mixing keeps per-transaction streams independent.
    let mut x = seed
        .wrapping_add(epoch.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add((index as u64 + 1).wrapping_mul(0xBF58476D1CE4E5B9));
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    ChaCha12Rng::seed_from_u64(x)
}

/// Generates one batch. Transactions carry read/write summaries derived
/// from their operations: point ops become degenerate single-point
/// predicates, the district update a hot single-point write predicate.
/// Deterministic given (spec, epoch); prefix-stable in `batch_size`.
pub fn gen_batch(spec: &WorkloadSpec, batch_size: usize, epoch: Epoch) -> Result<Vec<Transaction>> {
    spec.validate()?;
    match spec.kind {
        WorkloadKind::TpccLite => gen_tpcc_batch(spec, batch_size, epoch),
        _ => gen_ycsb_batch(spec, batch_size, epoch),
    }
}

fn gen_ycsb_batch(spec: &WorkloadSpec, batch_size: usize, epoch: Epoch) -> Result<Vec<Transaction>> {
    let schema = ycsb_schema(spec);
    let table = &schema.tables[0];
    let zipf = ZipfSampler::new(spec.keys_per_partition, spec.zipf_theta)?;
    let mut batch = Vec::with_capacity(batch_size);
    for index in 0..batch_size {
        let mut rng = txn_rng(spec.rng_seed, epoch, index);
        let home = rng.gen_range(0..spec.partitions) as u64;
        let mut ops = Vec::with_capacity(spec.ops_per_txn);
        let mut read_summary = Vec::new();
        let mut write_summary = Vec::new();
        for _ in 0..spec.ops_per_txn {
            let pk = home * spec.keys_per_partition + zipf.sample(&mut rng);
            let key = Key::new(0, pk);
            if rng.gen_bool(spec.read_fraction) {
                ops.push(Op::PointRead(key));
                read_summary.push(Predicate::point_on_key(key, table));
            } else {
                let mut value: AttributeVector = Vec::with_capacity(YCSB_COLUMNS);
                value.push(pk as i64);
                for col in 1..YCSB_COLUMNS {
                    let d = table.domains[col];
                    value.push(rng.gen_range(d.lo..=d.hi));
                }
                ops.push(Op::PointWrite(key, value));
                write_summary.push(Predicate::point_on_key(key, table));
            }
        }
        batch.push(Transaction::new(index as u32 + 1, ops, read_summary, write_summary));
    }
    Ok(batch)
}

/// NewOrder-like mix: read the warehouse row, bump the district counter
/// (the hot record), insert an order row, and update 5–15 stock rows.
fn gen_tpcc_batch(spec: &WorkloadSpec, batch_size: usize, epoch: Epoch) -> Result<Vec<Transaction>> {
    let schema = tpcc_schema(spec);
    let mut batch = Vec::with_capacity(batch_size);
    for index in 0..batch_size {
        let mut rng = txn_rng(spec.rng_seed, epoch, index);
        let part = rng.gen_range(0..spec.partitions) as u64;
        let mut ops = Vec::new();
        let mut read_summary = Vec::new();
        let mut write_summary = Vec::new();

        let wh_key = Key::new(tpcc::WAREHOUSE, part);
        ops.push(Op::PointRead(wh_key));
        read_summary.push(Predicate::point_on_key(wh_key, &schema.tables[tpcc::WAREHOUSE as usize]));

        // Hot single-point write predicate on the district counter.
        let d_key = Key::new(tpcc::DISTRICT, part);
        let d_pred = Predicate::point_on_key(d_key, &schema.tables[tpcc::DISTRICT as usize]);
        ops.push(Op::RangeWrite(d_pred.clone(), Delta { attr_index: 1, amount: 1 }));
        read_summary.push(d_pred.clone());
        write_summary.push(d_pred);

        // Order insert with a key unique per (epoch, partition, index).
        let order_pk = (epoch << 40) | (part << 24) | index as u64;
        let order_key = Key::new(tpcc::ORDERS, order_pk);
        ops.push(Op::PointWrite(order_key, vec![order_pk as i64, part as i64, index as i64]));
        write_summary.push(Predicate::point_on_key(order_key, &schema.tables[tpcc::ORDERS as usize]));

        let stock_lines = rng.gen_range(5..=15);
        let stock_schema = &schema.tables[tpcc::STOCK as usize];
        for _ in 0..stock_lines {
            let item = rng.gen_range(0..tpcc::ITEMS_PER_PARTITION);
            let s_key = Key::new(tpcc::STOCK, part * tpcc::ITEMS_PER_PARTITION + item);
            let s_pred = Predicate::point_on_key(s_key, stock_schema);
            ops.push(Op::RangeWrite(s_pred.clone(), Delta { attr_index: 1, amount: -(rng.gen_range(1..=5)) }));
            read_summary.push(s_pred.clone());
            write_summary.push(s_pred);
        }

        batch.push(Transaction::new(index as u32 + 1, ops, read_summary, write_summary));
    }
    Ok(batch)
}

/// One column relation for correlated-table generation: when every
/// condition in `active_when` holds, `target = a * source + b + noise`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnRelation {
    pub target: usize,
    pub source: usize,
    pub scale: i64,
    pub offset: i64,
    pub noise: i64,
    pub active_when: Vec<(usize, Interval)>,
}

/// Deterministic correlated table: base columns are uniform over their
/// domains, then relations overwrite targets where active. Relations apply
/// in order; two relations may not target the same column in overlapping
/// regimes.
pub fn gen_correlated_table(
    schema: &TableSchema,
    row_count: usize,
    relations: &[ColumnRelation],
    seed: u64,
) -> Result<Vec<AttributeVector>> {
    for r in relations {
        if r.target >= schema.attr_count() || r.source >= schema.attr_count() {
            return Err(Error::Config("relation column out of range".into()));
        }
        if r.target == r.source {
            return Err(Error::Config("relation targets its own source".into()));
        }
    }
    for (i, a) in relations.iter().enumerate() {
        for b in &relations[i + 1..] {
            if a.target == b.target && regimes_overlap(a, b, schema) {
                return Err(Error::Config(format!(
                    "contradictory relations on column {}",
                    a.target
                )));
            }
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(row_count);
    for _ in 0..row_count {
        let mut row: AttributeVector = schema
            .domains
            .iter()
            .map(|d| rng.gen_range(d.lo..=d.hi))
            .collect();
        for r in relations {
            if r.active_when.iter().all(|(col, iv)| iv.contains(row[*col])) {
                let noise = if r.noise > 0 { rng.gen_range(-r.noise..=r.noise) } else { 0 };
                let d = schema.domains[r.target];
                row[r.target] = (r.scale * row[r.source] + r.offset + noise).clamp(d.lo, d.hi);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Preset: a five-attribute table `[A1, B1, B2, A2, B3]` whose dependence
/// structure changes by value regime. A2 selects the regimes: below its
/// median, high B2 turns A1 = B1 = B3 on; above it, A1 = B1 always holds
/// and B3 selects between B2 = A1 + 1 and B2 = A1 + 2. The regime columns
/// use nine-value domains so a median split lands on the regime boundary.
pub mod mixed_regime {
    use super::*;
    use crate::model::Schema;

    pub fn schema() -> Schema {
        Schema {
            tables: vec![TableSchema {
                name: "joined".into(),
                attributes: ["A1", "B1", "B2", "A2", "B3"].iter().map(|s| s.to_string()).collect(),
                domains: vec![
                    Interval::new(1, 8),
                    Interval::new(1, 8),
                    Interval::new(1, 9),
                    Interval::new(1, 9),
                    Interval::new(1, 9),
                ],
                record_count: 0,
            }],
        }
    }

    pub fn relations() -> Vec<ColumnRelation> {
        let low_a2 = (3usize, Interval::new(1, 5));
        let high_a2 = (3usize, Interval::new(6, 9));
        let high_b2 = (2usize, Interval::new(6, 9));
        let low_b3 = (4usize, Interval::new(1, 5));
        let high_b3 = (4usize, Interval::new(6, 9));
        vec![
            ColumnRelation { target: 1, source: 0, scale: 1, offset: 0, noise: 0, active_when: vec![low_a2, high_b2] },
            ColumnRelation { target: 4, source: 0, scale: 1, offset: 0, noise: 0, active_when: vec![low_a2, high_b2] },
            ColumnRelation { target: 1, source: 0, scale: 1, offset: 0, noise: 0, active_when: vec![high_a2] },
            ColumnRelation { target: 2, source: 0, scale: 1, offset: 1, noise: 0, active_when: vec![high_a2, low_b3] },
            ColumnRelation { target: 2, source: 0, scale: 1, offset: 2, noise: 0, active_when: vec![high_a2, high_b3] },
        ]
    }

    pub fn rows(count: usize, seed: u64) -> Vec<AttributeVector> {
        gen_correlated_table(&schema().tables[0], count, &relations(), seed).expect("valid preset")
    }
}

fn regimes_overlap(a: &ColumnRelation, b: &ColumnRelation, schema: &TableSchema) -> bool {
    // Conditions on different columns can always co-fire; only disjoint
    // intervals on a shared column separate two regimes.
    for (ca, iva) in &a.active_when {
        for (cb, ivb) in &b.active_when {
            if ca == cb && iva.intersect(ivb).is_none() {
                return false;
            }
        }
    }
    let _ = schema;
    true
}
