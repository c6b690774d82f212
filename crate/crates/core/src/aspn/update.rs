//! Structure-preserving incremental maintenance.
//!
//! A delta walks the tree top-down. Decomposition nodes route rows to the
//! child whose context interval contains the split value, refreshing the
//! selector histograms and child weights. Joint and independent nodes
//! re-check their dependence assumption on the merged capped sample:
//! parameters update in place when it survives, otherwise the subtree is
//! rebuilt offline from the merged sample. An empty delta leaves the model
//! structurally identical.

use crate::error::{Error, Result};
use crate::model::{AttributeVector, Interval};

use super::build::{build_aspn, cap_rows, project_row};
use super::correlation::find_strong_subset;
use super::{AspnConfig, AspnModel, AspnNode};

pub fn update_incremental(
    model: &mut AspnModel,
    inserts: &[AttributeVector],
    deletes: &[AttributeVector],
) -> Result<()> {
    if inserts.is_empty() && deletes.is_empty() {
        return Ok(());
    }
    let arity = model.attrs.len();
    for row in inserts.iter().chain(deletes) {
        if row.len() != arity {
            return Err(Error::Schema(format!(
                "delta arity {} does not match model arity {arity}; rebuild the model",
                row.len()
            )));
        }
        for (v, d) in row.iter().zip(&model.domains) {
            if !d.contains(*v) {
                return Err(Error::Schema(format!(
                    "delta value {v} outside domain [{}, {}]; rebuild the model",
                    d.lo, d.hi
                )));
            }
        }
    }
    let all: Vec<usize> = (0..arity).collect();
    let domains = model.domains.clone();
    let config = model.config.clone();
    update_node(&mut model.root, &all, inserts, deletes, &domains, &config);
    model.sample_size = (model.sample_size + inserts.len() as u64).saturating_sub(deletes.len() as u64);
    Ok(())
}

/// `node_attrs` is the attribute layout of the rows handed to this node;
/// rows are projected as routing descends.
fn update_node(
    node: &mut AspnNode,
    node_attrs: &[usize],
    inserts: &[Vec<i64>],
    deletes: &[Vec<i64>],
    domains: &[Interval],
    config: &AspnConfig,
) {
    if inserts.is_empty() && deletes.is_empty() {
        return;
    }
    match node {
        AspnNode::Leaf { attr, hist, .. } => {
            let col = position_of(node_attrs, *attr);
            for r in inserts {
                hist.add(r[col]);
            }
            for r in deletes {
                hist.remove(r[col]);
            }
        }
        AspnNode::Independent { attrs, children, sample } => {
            let merged = merge_sample(sample, inserts, deletes, config.sample_cap);
            let still_independent = merged.len() < 2
                || find_strong_subset(
                    attrs,
                    &merged,
                    config.correlation_threshold,
                    config.rng_seed,
                    config.rdc_features,
                    config.sample_cap,
                )
                .strong_subset
                .is_empty();
            if still_independent {
                for child in children.iter_mut() {
                    update_node(child, node_attrs, inserts, deletes, domains, config);
                }
                *sample = merged;
            } else {
                *node = build_aspn(attrs, merged, domains, config);
            }
        }
        AspnNode::Joint { attrs, grid, sample, low_confidence } => {
            let merged = merge_sample(sample, inserts, deletes, config.sample_cap);
            let preserved = if *low_confidence || merged.len() < 2 {
                true
            } else {
                let report = find_strong_subset(
                    attrs,
                    &merged,
                    config.correlation_threshold,
                    config.rng_seed,
                    config.rdc_features,
                    config.sample_cap,
                );
                report.strong_subset.len() == attrs.len()
            };
            if preserved {
                for r in inserts {
                    grid.add(r);
                }
                for r in deletes {
                    grid.remove(r);
                }
                *sample = merged;
            } else {
                // Dependence broken: rebuild the local structure offline.
                *node = build_aspn(attrs, merged, domains, config);
            }
        }
        AspnNode::Decomposition { split_attr, children } => {
            let col = position_of(node_attrs, *split_attr);
            let rest: Vec<usize> =
                node_attrs.iter().copied().filter(|a| a != split_attr).collect();
            for (dir, rows) in [(true, inserts), (false, deletes)] {
                for row in rows {
                    let v = row[col];
                    let child = children
                        .iter_mut()
                        .find(|c| c.interval.contains(v))
                        .expect("decomposition intervals are exhaustive");
                    if dir {
                        child.selector.add(v);
                        child.count += 1;
                    } else {
                        child.selector.remove(v);
                        child.count = child.count.saturating_sub(1);
                    }
                }
            }
            // Recurse with routed, projected rows.
            for child in children.iter_mut() {
                let route = |rows: &[Vec<i64>]| -> Vec<Vec<i64>> {
                    rows.iter()
                        .filter(|r| child.interval.contains(r[col]))
                        .map(|r| project_row(r, node_attrs, &rest))
                        .collect()
                };
                let ins = route(inserts);
                let del = route(deletes);
                update_node(&mut child.node, &rest, &ins, &del, domains, config);
            }
            let total: u64 = children.iter().map(|c| c.count).sum();
            if total > 0 {
                for child in children.iter_mut() {
                    child.weight = child.count as f64 / total as f64;
                }
            }
        }
    }
}

fn position_of(attrs: &[usize], attr: usize) -> usize {
    attrs.iter().position(|&a| a == attr).expect("attr belongs to node")
}

/// sample ∪ inserts minus deletes (first match by value), capped.
fn merge_sample(
    sample: &[Vec<i64>],
    inserts: &[Vec<i64>],
    deletes: &[Vec<i64>],
    cap: usize,
) -> Vec<Vec<i64>> {
    let mut merged: Vec<Vec<i64>> = sample.to_vec();
    merged.extend(inserts.iter().cloned());
    for d in deletes {
        if let Some(pos) = merged.iter().position(|r| r == d) {
            merged.remove(pos);
        }
    }
    cap_rows(merged, cap)
}
