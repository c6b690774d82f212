//! Top-down structure learning.
//!
//! Each call classifies the target attribute set over its record partition:
//! single attribute → leaf; no strong dependencies → independent node with
//! one leaf per attribute; everything strongly dependent → joint node;
//! otherwise a decomposition that conditions on one attribute, splits its
//! values into quantile intervals, and recurses on the remaining attributes
//! per partition.
//!
//! The conditioning attribute is the weakest-coupled one outside the strong
//! subset: the attribute with the lowest maximum pairwise score acts as the
//! regime selector, and conditioning on its value ranges separates the data
//! regimes that blur the remaining dependencies. Ties break to the smallest
//! id. Undersized partitions stop recursion with flat low-confidence
//! estimators.

use crate::model::Interval;

use super::correlation::{find_strong_subset, CorrelationReport};
use super::estimator::{Histogram, SparseGrid};
use super::{AspnConfig, AspnNode, DecompChild};

/// Builds a node over `attrs` (model attribute ids) from `rows` projected
/// in the same order. `domains` is indexed by model attribute id.
pub fn build_aspn(
    attrs: &[usize],
    rows: Vec<Vec<i64>>,
    domains: &[Interval],
    config: &AspnConfig,
) -> AspnNode {
    debug_assert!(!attrs.is_empty());
    if attrs.len() == 1 {
        return build_leaf(attrs[0], &rows, 0, domains, config);
    }
    if rows.len() < config.min_node_samples {
        return AspnNode::Joint {
            attrs: attrs.to_vec(),
            grid: SparseGrid::flat(&project_domains(attrs, domains)),
            sample: rows,
            low_confidence: true,
        };
    }

    let report = find_strong_subset(
        attrs,
        &rows,
        config.correlation_threshold,
        config.rng_seed,
        config.rdc_features,
        config.sample_cap,
    );

    if report.strong_subset.is_empty() {
        let children = attrs
            .iter()
            .enumerate()
            .map(|(c, &a)| build_leaf(a, &rows, c, domains, config))
            .collect();
        return AspnNode::Independent {
            attrs: attrs.to_vec(),
            children,
            sample: cap_rows(rows, config.sample_cap),
        };
    }

    if report.strong_subset.len() == attrs.len() {
        return build_joint(attrs, rows, domains, config, false);
    }

    match choose_split(attrs, &rows, &report, config) {
        Some((split_pos, cuts)) => {
            build_decomposition(attrs, rows, split_pos, cuts, domains, config)
        }
        // No attribute splits cleanly (e.g. near-constant columns); fall
        // back to a joint estimator over the full set.
        None => build_joint(attrs, rows, domains, config, true),
    }
}

fn build_leaf(attr: usize, rows: &[Vec<i64>], col: usize, domains: &[Interval], config: &AspnConfig) -> AspnNode {
    if rows.len() < config.min_node_samples {
        return AspnNode::Leaf { attr, hist: Histogram::flat(domains[attr]), low_confidence: true };
    }
    let hist = Histogram::build(domains[attr], config.leaf_bins, rows.iter().map(|r| r[col]));
    AspnNode::Leaf { attr, hist, low_confidence: false }
}

pub(super) fn build_joint(
    attrs: &[usize],
    rows: Vec<Vec<i64>>,
    domains: &[Interval],
    config: &AspnConfig,
    low_confidence: bool,
) -> AspnNode {
    let dom = project_domains(attrs, domains);
    let grid = if rows.len() < config.min_node_samples {
        SparseGrid::flat(&dom)
    } else {
        SparseGrid::build(&dom, config.grid_bins, rows.iter().map(|r| r.as_slice()))
    };
    let flat = rows.len() < config.min_node_samples;
    AspnNode::Joint {
        attrs: attrs.to_vec(),
        grid,
        sample: cap_rows(rows, config.sample_cap),
        low_confidence: low_confidence || flat,
    }
}

/// Quantile cut values for one column: `max_clusters` near-equal-frequency
/// groups. Cuts equal to the maximum value are dropped (they would leave an
/// empty upper partition); `None` when the column cannot be split.
fn quantile_cuts(values: &[i64], clusters: usize) -> Option<Vec<i64>> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let max = *sorted.last().expect("nonempty");
    let mut cuts: Vec<i64> = (1..clusters.max(2))
        .map(|i| sorted[i * sorted.len() / clusters.max(2)])
        .filter(|&c| c < max)
        .collect();
    cuts.dedup();
    if cuts.is_empty() {
        None
    } else {
        Some(cuts)
    }
}

/// Partition intervals covering the attribute's full domain.
fn cut_intervals(domain: Interval, cuts: &[i64]) -> Vec<Interval> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = domain.lo;
    for &c in cuts {
        out.push(Interval::new(lo, c));
        lo = c + 1;
    }
    out.push(Interval::new(lo, domain.hi));
    out
}

/// Picks the conditioning attribute: the splittable attribute with the
/// lowest maximum pairwise dependence, preferring attributes outside the
/// strong subset. Returns its position within `attrs` and its cut values.
fn choose_split(
    attrs: &[usize],
    rows: &[Vec<i64>],
    report: &CorrelationReport,
    config: &AspnConfig,
) -> Option<(usize, Vec<i64>)> {
    let mut candidates: Vec<(bool, f64, usize)> = attrs
        .iter()
        .enumerate()
        .map(|(pos, &attr)| {
            (report.strong_subset.contains(&attr), report.max_score_of(attr), pos)
        })
        .collect();
    // Outside-D first, then weakest coupling, then smallest attribute id.
    candidates.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).expect("scores are finite"))
            .then(attrs[a.2].cmp(&attrs[b.2]))
    });
    for (_, _, pos) in candidates {
        let column: Vec<i64> = rows.iter().map(|r| r[pos]).collect();
        if let Some(cuts) = quantile_cuts(&column, config.max_clusters) {
            return Some((pos, cuts));
        }
    }
    None
}

fn build_decomposition(
    attrs: &[usize],
    rows: Vec<Vec<i64>>,
    split_pos: usize,
    cuts: Vec<i64>,
    domains: &[Interval],
    config: &AspnConfig,
) -> AspnNode {
    let split_attr = attrs[split_pos];
    let rest: Vec<usize> = attrs.iter().copied().filter(|&a| a != split_attr).collect();
    let intervals = cut_intervals(domains[split_attr], &cuts);
    let total = rows.len() as f64;

    let mut children = Vec::with_capacity(intervals.len());
    for iv in intervals {
        let part: Vec<&Vec<i64>> = rows.iter().filter(|r| iv.contains(r[split_pos])).collect();
        let count = part.len() as u64;
        let selector = if part.is_empty() {
            Histogram::flat(iv)
        } else {
            Histogram::build(iv, config.leaf_bins, part.iter().map(|r| r[split_pos]))
        };
        let part_rows: Vec<Vec<i64>> = part.iter().map(|r| project_row(r, attrs, &rest)).collect();
        let node = build_aspn(&rest, part_rows, domains, config);
        children.push(DecompChild {
            interval: iv,
            weight: count as f64 / total,
            count,
            selector,
            node,
        });
    }
    AspnNode::Decomposition { split_attr, children }
}

/// Projects a row (laid out per `from` attribute order) onto `to`.
pub(super) fn project_row(row: &[i64], from: &[usize], to: &[usize]) -> Vec<i64> {
    to.iter()
        .map(|a| {
            let pos = from.iter().position(|x| x == a).expect("projection attr present");
            row[pos]
        })
        .collect()
}

pub(super) fn project_domains(attrs: &[usize], domains: &[Interval]) -> Vec<Interval> {
    attrs.iter().map(|&a| domains[a]).collect()
}

/// Caps a row set by even-stride subsampling, so the kept rows stay
/// representative of the whole mix (a plain prefix would over-weight
/// whichever side of a merge comes first).
pub(super) fn cap_rows(rows: Vec<Vec<i64>>, cap: usize) -> Vec<Vec<i64>> {
    if rows.len() <= cap {
        return rows;
    }
    let step = rows.len().div_ceil(cap);
    rows.into_iter().step_by(step).collect()
}
