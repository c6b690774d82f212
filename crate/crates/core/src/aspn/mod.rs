//! Association sum-product network: a tree-structured probabilistic model
//! over attribute distributions used for predicate-overlap estimation and
//! conflict prediction.
//!
//! Structure learning recursively classifies each attribute set: a single
//! attribute becomes a histogram leaf; mutually independent attributes
//! factorize into per-attribute marginals; a fully dependent set gets a
//! joint grid estimator; and a mixed set is decomposed by conditioning on
//! one attribute, partitioning its values and recursing on the remainder.
//! Inference propagates a query box down the tree, combining masses by
//! node type. Built models are immutable for concurrent inference;
//! incremental maintenance rebuilds only the subtrees whose dependence
//! assumptions a delta invalidates.

mod build;
mod correlation;
mod estimator;
mod multi_table;
mod update;

pub use correlation::{dependence_score, find_strong_subset, CorrelationReport};
pub use estimator::{Axis, Histogram, SparseGrid};
pub use multi_table::{build_multi_table, JoinEdge, JoinSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{intersect_predicates, AttributeVector, Interval, Predicate, Schema, TableId};

/// Model construction and prediction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspnConfig {
    /// Pairwise dependence threshold for the strong subset.
    pub correlation_threshold: f64,
    /// Maximum partitions per decomposition (quantile cuts; 2 = median).
    pub max_clusters: usize,
    /// Below this sample size recursion stops with a flat estimator.
    pub min_node_samples: usize,
    /// Bins per leaf histogram.
    pub leaf_bins: usize,
    /// Bins per joint-grid dimension.
    pub grid_bins: usize,
    /// Sinusoidal feature count for the dependence score.
    pub rdc_features: usize,
    /// Correlation subsample cap.
    pub sample_cap: usize,
    /// Expected overlapping rows at which a pair is predicted conflicting.
    pub conflict_threshold_rows: f64,
    pub rng_seed: u64,
}

impl Default for AspnConfig {
    fn default() -> Self {
        AspnConfig {
            correlation_threshold: 0.3,
            max_clusters: 2,
            min_node_samples: 50,
            leaf_bins: 64,
            grid_bins: 32,
            rdc_features: 4,
            sample_cap: 2000,
            conflict_threshold_rows: 0.5,
            rng_seed: 0,
        }
    }
}

/// Query box over a model's attribute list; `None` leaves an attribute
/// unconstrained.
pub type BoxQuery = Vec<Option<Interval>>;

/// One decomposition partition: the context interval on the split
/// attribute, the record fraction it holds, a histogram of the split
/// attribute within the partition, and the submodel over the remaining
/// attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompChild {
    pub interval: Interval,
    pub weight: f64,
    pub count: u64,
    pub selector: Histogram,
    pub node: AspnNode,
}

/// ASPN node. Attribute ids index the owning model's attribute list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AspnNode {
    Leaf {
        attr: usize,
        hist: Histogram,
        low_confidence: bool,
    },
    Independent {
        attrs: Vec<usize>,
        children: Vec<AspnNode>,
        /// Capped training rows projected onto `attrs`, kept for
        /// independence re-checks during incremental updates.
        sample: Vec<Vec<i64>>,
    },
    Joint {
        attrs: Vec<usize>,
        grid: SparseGrid,
        sample: Vec<Vec<i64>>,
        low_confidence: bool,
    },
    Decomposition {
        split_attr: usize,
        children: Vec<DecompChild>,
    },
}

impl AspnNode {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AspnNode::Leaf { .. } => "leaf",
            AspnNode::Independent { .. } => "independent",
            AspnNode::Joint { .. } => "joint",
            AspnNode::Decomposition { .. } => "decomposition",
        }
    }

    /// Recursive box-mass evaluation.
    fn eval(&self, q: &BoxQuery) -> f64 {
        match self {
            AspnNode::Leaf { attr, hist, .. } => hist.mass(q[*attr].as_ref()),
            AspnNode::Independent { children, .. } => {
                children.iter().map(|c| c.eval(q)).product()
            }
            AspnNode::Joint { attrs, grid, .. } => {
                let sub: Vec<Option<Interval>> = attrs.iter().map(|&a| q[a]).collect();
                grid.mass(&sub)
            }
            AspnNode::Decomposition { split_attr, children } => {
                let mut mass = 0.0;
                for child in children {
                    if child.weight == 0.0 {
                        continue;
                    }
                    let sel = match &q[*split_attr] {
                        Some(iv) => {
                            if iv.intersect(&child.interval).is_none() {
                                continue; // query misses this child's context
                            }
                            child.selector.mass(Some(iv))
                        }
                        None => 1.0,
                    };
                    if sel > 0.0 {
                        mass += child.weight * sel * child.node.eval(q);
                    }
                }
                mass
            }
        }
    }
}

/// Attribute metadata: owning table and column position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrMeta {
    pub table_id: TableId,
    pub column: usize,
    pub name: String,
}

/// A built model over one table (or one merged multi-table unit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspnModel {
    pub attrs: Vec<AttrMeta>,
    pub domains: Vec<Interval>,
    pub root: AspnNode,
    pub sample_size: u64,
    pub rng_seed: u64,
    pub config: AspnConfig,
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned serialization wrapper.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: AspnModel,
}

impl AspnModel {
    /// Builds a single-table model over full-arity rows.
    pub fn build_single_table(
        schema: &Schema,
        table_id: TableId,
        rows: &[AttributeVector],
        config: &AspnConfig,
    ) -> Result<AspnModel> {
        let ts = schema.table(table_id)?;
        if rows.is_empty() {
            return Err(Error::Config("cannot build a model over zero records".into()));
        }
        if rows.iter().any(|r| r.len() != ts.attr_count()) {
            return Err(Error::Schema("row arity does not match table".into()));
        }
        let attrs: Vec<AttrMeta> = ts
            .attributes
            .iter()
            .enumerate()
            .map(|(i, name)| AttrMeta { table_id, column: i, name: name.clone() })
            .collect();
        let domains = ts.domains.clone();
        let ids: Vec<usize> = (0..attrs.len()).collect();
        let root = build::build_aspn(&ids, rows.to_vec(), &domains, config);
        Ok(AspnModel {
            attrs,
            domains,
            root,
            sample_size: rows.len() as u64,
            rng_seed: config.rng_seed,
            config: config.clone(),
        })
    }

    /// Probability mass of a box over the model's attribute list.
    pub fn infer_box(&self, q: &BoxQuery) -> f64 {
        debug_assert_eq!(q.len(), self.attrs.len());
        self.root.eval(q)
    }

    /// Probability mass of a single-table predicate; attributes of other
    /// tables in the model's unit stay unconstrained. EMPTY yields 0.
    pub fn infer_probability(&self, pred: &Predicate) -> Result<f64> {
        match self.predicate_to_box(pred)? {
            Some(q) => Ok(self.infer_box(&q)),
            None => Ok(0.0),
        }
    }

    /// `None` for the EMPTY predicate.
    fn predicate_to_box(&self, pred: &Predicate) -> Result<Option<BoxQuery>> {
        if !self.attrs.iter().any(|a| a.table_id == pred.table_id) {
            return Err(Error::Schema(format!(
                "predicate table {} not covered by this model",
                pred.table_id
            )));
        }
        let Some(bounds) = pred.bounds() else { return Ok(None) };
        let mut q: BoxQuery = vec![None; self.attrs.len()];
        for (pos, meta) in self.attrs.iter().enumerate() {
            if meta.table_id == pred.table_id {
                let b = bounds.get(meta.column).ok_or_else(|| {
                    Error::Schema(format!("predicate arity too small for column {}", meta.column))
                })?;
                q[pos] = Some(*b);
            }
        }
        Ok(Some(q))
    }

    /// Conflict prediction for two same-table predicates: true iff the
    /// estimated mass of their intersection times `table_size` reaches the
    /// expected-row threshold. An EMPTY intersection short-circuits to
    /// false without model evaluation.
    pub fn predict_conflict(
        &self,
        a: &Predicate,
        b: &Predicate,
        table_size: u64,
        threshold_expected_rows: f64,
    ) -> Result<bool> {
        let q = intersect_predicates(a, b)?;
        if q.is_empty() {
            return Ok(false);
        }
        let p = self.infer_probability(&q)?;
        Ok(p * table_size as f64 >= threshold_expected_rows)
    }

    /// Box-level conflict prediction for merged multi-table units.
    pub fn predict_conflict_boxes(
        &self,
        a: &BoxQuery,
        b: &BoxQuery,
        scale: u64,
        threshold_expected_rows: f64,
    ) -> bool {
        let Some(q) = intersect_boxes(a, b) else { return false };
        self.infer_box(&q) * scale as f64 >= threshold_expected_rows
    }

    /// Applies an insert/delete delta in place, preserving structure where
    /// the dependence assumptions survive and rebuilding subtrees where
    /// they do not. Rows must match the model's arity.
    pub fn update_incremental(
        &mut self,
        inserts: &[AttributeVector],
        deletes: &[AttributeVector],
    ) -> Result<()> {
        update::update_incremental(self, inserts, deletes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile { version: MODEL_FORMAT_VERSION, model: self.clone() })
            .expect("model serializes")
    }

    pub fn from_json(json: &str) -> Result<AspnModel> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Io(format!(
                "unsupported model format version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

/// Reads training data from a CSV file with a header row; every field must
/// parse as a 64-bit integer.
pub fn load_csv(path: &std::path::Path) -> Result<(Vec<String>, Vec<AttributeVector>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Result<AttributeVector> = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Io(format!("non-numeric CSV field {f:?}")))
            })
            .collect();
        let row = row?;
        if row.len() != header.len() {
            return Err(Error::Io("CSV row arity differs from header".into()));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Component-wise box intersection; `None` when any attribute inverts.
pub fn intersect_boxes(a: &BoxQuery, b: &BoxQuery) -> Option<BoxQuery> {
    debug_assert_eq!(a.len(), b.len());
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        out.push(match (x, y) {
            (None, None) => None,
            (Some(iv), None) | (None, Some(iv)) => Some(*iv),
            (Some(p), Some(q)) => Some(p.intersect(q)?),
        });
    }
    Some(out)
}

/// Per-table model collection for the engine's prediction phase. Tables
/// without enough data fall back to a purely geometric overlap test, which
/// is exact for the point predicates such tables see.
pub struct ModelSet {
    pub models: Vec<AspnModel>,
    by_table: BTreeMap<TableId, usize>,
    table_sizes: BTreeMap<TableId, u64>,
    threshold_rows: f64,
}

impl ModelSet {
    /// Trains one model per table that has records. `table_sizes` carries
    /// the live record count per table (training rows may be a sample).
    pub fn train_per_table(
        schema: &Schema,
        rows_by_table: &[(TableId, u64, Vec<AttributeVector>)],
        config: &AspnConfig,
    ) -> Result<ModelSet> {
        let mut models = Vec::new();
        let mut by_table = BTreeMap::new();
        let mut table_sizes = BTreeMap::new();
        for (table_id, size, rows) in rows_by_table {
            table_sizes.insert(*table_id, *size);
            if rows.is_empty() {
                continue;
            }
            by_table.insert(*table_id, models.len());
            models.push(AspnModel::build_single_table(schema, *table_id, rows, config)?);
        }
        Ok(ModelSet { models, by_table, table_sizes, threshold_rows: config.conflict_threshold_rows })
    }

    pub fn model_for(&self, table: TableId) -> Option<&AspnModel> {
        self.by_table.get(&table).map(|&i| &self.models[i])
    }

    /// Predicts whether two predicates overlap a populated region. Distinct
    /// tables never conflict; unmodeled tables use the geometric test.
    pub fn predict_conflict(&self, a: &Predicate, b: &Predicate) -> Result<bool> {
        if a.table_id != b.table_id || crate::model::predicates_disjoint(a, b) {
            return Ok(false);
        }
        match self.model_for(a.table_id) {
            Some(model) => {
                let size = self.table_sizes.get(&a.table_id).copied().unwrap_or(0);
                model.predict_conflict(a, b, size, self.threshold_rows)
            }
            None => Ok(!intersect_predicates(a, b)?.is_empty()),
        }
    }
}
