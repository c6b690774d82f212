//! Multi-table modeling over an acyclic join specification.
//!
//! Each join edge is sampled; table pairs showing any cross-table
//! dependence at or above the threshold merge into one modeling unit, and
//! merging repeats until no strongly correlated pair remains. Every unit is
//! then modeled independently: single tables directly, merged units over a
//! materialized join sample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeVector, Schema, TableId};

use super::build::build_aspn;
use super::correlation::dependence_score;
use super::{AspnConfig, AspnModel, AttrMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left_table: TableId,
    pub left_col: usize,
    pub right_table: TableId,
    pub right_col: usize,
}

/// Acyclic (tree-shaped) join specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub edges: Vec<JoinEdge>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    /// Returns false when both sides already share a root.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Builds one model per modeling unit. `tables[t]` holds the records of
/// table id t (schema order).
pub fn build_multi_table(
    schema: &Schema,
    tables: &[Vec<AttributeVector>],
    join: &JoinSpec,
    sample_size: usize,
    config: &AspnConfig,
) -> Result<Vec<AspnModel>> {
    let n = schema.tables.len();
    if tables.len() != n {
        return Err(Error::Schema(format!("{} tables but schema has {n}", tables.len())));
    }
    // Tree check.
    let mut uf = UnionFind::new(n);
    for e in &join.edges {
        validate_edge(schema, e)?;
        if !uf.union(e.left_table as usize, e.right_table as usize) {
            return Err(Error::Config("cyclic join specification".into()));
        }
    }

    // Merge units where a sampled join shows cross-table dependence. A
    // single pass over tree edges reaches the fixpoint: merged units only
    // ever connect through these edges.
    let mut units = UnionFind::new(n);
    for e in &join.edges {
        let joined = sample_join_pairs(schema, tables, e, sample_size)?;
        if joined.is_empty() {
            continue;
        }
        let left_arity = schema.table(e.left_table)?.attr_count();
        let right_arity = schema.table(e.right_table)?.attr_count();
        let mut correlated = false;
        'outer: for lc in 0..left_arity {
            for rc in 0..right_arity {
                if lc == e.left_col && rc == e.right_col {
                    // The join columns are equal by construction; only a
                    // non-trivial cross pair justifies merging.
                    continue;
                }
                let a: Vec<i64> = joined.iter().map(|r| r[lc]).collect();
                let b: Vec<i64> = joined.iter().map(|r| r[left_arity + rc]).collect();
                let s = dependence_score(&a, &b, config.rng_seed, config.rdc_features);
                if s >= config.correlation_threshold {
                    correlated = true;
                    break 'outer;
                }
            }
        }
        if correlated {
            units.union(e.left_table as usize, e.right_table as usize);
        }
    }

    let mut groups: BTreeMap<usize, Vec<TableId>> = BTreeMap::new();
    for t in 0..n {
        groups.entry(units.find(t)).or_default().push(t as TableId);
    }

    let mut models = Vec::new();
    for (_, members) in groups {
        if members.iter().all(|&t| tables[t as usize].is_empty()) {
            continue;
        }
        let model = if members.len() == 1 {
            let t = members[0];
            let rows: Vec<AttributeVector> =
                tables[t as usize].iter().take(sample_size).cloned().collect();
            AspnModel::build_single_table(schema, t, &rows, config)?
        } else {
            build_unit_model(schema, tables, join, &members, sample_size, config)?
        };
        models.push(model);
    }
    Ok(models)
}

fn validate_edge(schema: &Schema, e: &JoinEdge) -> Result<()> {
    let lt = schema.table(e.left_table)?;
    let rt = schema.table(e.right_table)?;
    if e.left_col >= lt.attr_count() || e.right_col >= rt.attr_count() {
        return Err(Error::Config("join column out of range".into()));
    }
    Ok(())
}

/// Sampled rows of `left ⋈ right`, concatenated left-then-right, in
/// deterministic row order, capped at `sample_size`.
fn sample_join_pairs(
    schema: &Schema,
    tables: &[Vec<AttributeVector>],
    e: &JoinEdge,
    sample_size: usize,
) -> Result<Vec<Vec<i64>>> {
    validate_edge(schema, e)?;
    let left = &tables[e.left_table as usize];
    let right = &tables[e.right_table as usize];
    let mut index: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in right.iter().enumerate() {
        index.entry(r[e.right_col]).or_default().push(i);
    }
    let mut out = Vec::new();
    'rows: for l in left {
        if let Some(matches) = index.get(&l[e.left_col]) {
            for &ri in matches {
                let mut row = l.clone();
                row.extend_from_slice(&right[ri]);
                out.push(row);
                if out.len() >= sample_size {
                    break 'rows;
                }
            }
        }
    }
    Ok(out)
}

/// Materializes the join sample of a merged unit along its tree edges and
/// builds one model over the combined attribute list (unit tables in
/// ascending id order).
fn build_unit_model(
    schema: &Schema,
    tables: &[Vec<AttributeVector>],
    join: &JoinSpec,
    members: &[TableId],
    sample_size: usize,
    config: &AspnConfig,
) -> Result<AspnModel> {
    let unit_edges: Vec<&JoinEdge> = join
        .edges
        .iter()
        .filter(|e| members.contains(&e.left_table) && members.contains(&e.right_table))
        .collect();

    // Partial rows: table id → that table's values.
    let start = members[0];
    let mut rows: Vec<BTreeMap<TableId, AttributeVector>> = tables[start as usize]
        .iter()
        .take(sample_size)
        .map(|r| BTreeMap::from([(start, r.clone())]))
        .collect();
    let mut joined: Vec<TableId> = vec![start];
    let mut used = vec![false; unit_edges.len()];
    while joined.len() < members.len() {
        let Some(pos) = unit_edges.iter().enumerate().position(|(i, e)| {
            !used[i]
                && (joined.contains(&e.left_table) != joined.contains(&e.right_table))
        }) else {
            return Err(Error::Config("unit join edges do not connect all members".into()));
        };
        used[pos] = true;
        let e = unit_edges[pos];
        let (have, need, have_col, need_col) = if joined.contains(&e.left_table) {
            (e.left_table, e.right_table, e.left_col, e.right_col)
        } else {
            (e.right_table, e.left_table, e.right_col, e.left_col)
        };
        let mut index: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, r) in tables[need as usize].iter().enumerate() {
            index.entry(r[need_col]).or_default().push(i);
        }
        let mut next = Vec::new();
        'rows: for partial in &rows {
            let v = partial[&have][have_col];
            if let Some(matches) = index.get(&v) {
                for &ri in matches {
                    let mut ext = partial.clone();
                    ext.insert(need, tables[need as usize][ri].clone());
                    next.push(ext);
                    if next.len() >= sample_size {
                        break 'rows;
                    }
                }
            }
        }
        rows = next;
        joined.push(need);
    }
    if rows.is_empty() {
        return Err(Error::Config("join sample is empty; cannot model the unit".into()));
    }

    let mut attrs = Vec::new();
    let mut domains = Vec::new();
    for &t in members {
        let ts = schema.table(t)?;
        for (c, name) in ts.attributes.iter().enumerate() {
            attrs.push(AttrMeta { table_id: t, column: c, name: name.clone() });
            domains.push(ts.domains[c]);
        }
    }
    let flat: Vec<Vec<i64>> = rows
        .iter()
        .map(|partial| {
            members
                .iter()
                .flat_map(|t| partial[t].iter().copied())
                .collect()
        })
        .collect();

    let ids: Vec<usize> = (0..attrs.len()).collect();
    let root = build_aspn(&ids, flat.clone(), &domains, config);
    Ok(AspnModel {
        attrs,
        domains,
        root,
        sample_size: flat.len() as u64,
        rng_seed: config.rng_seed,
        config: config.clone(),
    })
}
