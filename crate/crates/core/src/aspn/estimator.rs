//! Histogram estimators with exact box-mass integration.
//!
//! All estimators bin closed integer domains into near-equal integer
//! sub-ranges, so the mass of an interval is computed exactly from bin
//! counts plus integer overlap fractions for partially covered bins.
//! Deterministic by construction and monotone in the query box.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::model::Interval;

/// Bin layout over one integer domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub domain: Interval,
    /// Inclusive start value of each bin; bin i covers
    /// `[starts[i], starts[i+1] - 1]`, the last bin ends at `domain.hi`.
    starts: Vec<i64>,
}

impl Axis {
    pub fn new(domain: Interval, bins: usize) -> Axis {
        let width = domain.width().max(1);
        let bins = (bins as u64).min(width).max(1);
        let starts = (0..bins)
            .map(|i| domain.lo + ((i as i128 * width as i128) / bins as i128) as i64)
            .collect();
        Axis { domain, starts }
    }

    pub fn bins(&self) -> usize {
        self.starts.len()
    }

    pub fn bin_of(&self, v: i64) -> usize {
        debug_assert!(self.domain.contains(v), "value {v} outside {:?}", self.domain);
        match self.starts.binary_search(&v) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    fn bin_interval(&self, i: usize) -> Interval {
        let lo = self.starts[i];
        let hi = if i + 1 < self.starts.len() { self.starts[i + 1] - 1 } else { self.domain.hi };
        Interval::new(lo, hi)
    }

    /// Fraction of bin i's integer points covered by `query`.
    pub fn overlap_fraction(&self, i: usize, query: &Interval) -> f64 {
        let bin = self.bin_interval(i);
        match bin.intersect(query) {
            Some(iv) => iv.width() as f64 / bin.width() as f64,
            None => 0.0,
        }
    }
}

/// Univariate equi-width histogram; `flat` marks a low-confidence uniform
/// estimator forced by insufficient samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub axis: Axis,
    counts: Vec<u64>,
    total: u64,
    pub flat: bool,
}

impl Histogram {
    pub fn build(domain: Interval, bins: usize, values: impl Iterator<Item = i64>) -> Histogram {
        let axis = Axis::new(domain, bins);
        let mut counts = vec![0u64; axis.bins()];
        let mut total = 0;
        for v in values {
            counts[axis.bin_of(v)] += 1;
            total += 1;
        }
        Histogram { axis, counts, total, flat: false }
    }

    pub fn flat(domain: Interval) -> Histogram {
        let axis = Axis::new(domain, 1);
        Histogram { counts: vec![0; axis.bins()], axis, total: 0, flat: true }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Probability mass of the query interval; `None` means unconstrained.
    /// Only the covered bin range is visited; interior bins contribute their
    /// full counts, boundary bins a fractional overlap.
    pub fn mass(&self, query: Option<&Interval>) -> f64 {
        let Some(q) = query else { return 1.0 };
        let Some(clamped) = q.intersect(&self.axis.domain) else { return 0.0 };
        if self.flat {
            return clamped.width() as f64 / self.axis.domain.width() as f64;
        }
        if self.total == 0 {
            return 0.0;
        }
        let lo_bin = self.axis.bin_of(clamped.lo);
        let hi_bin = self.axis.bin_of(clamped.hi);
        let mut mass = 0.0;
        for i in lo_bin..=hi_bin {
            let c = self.counts[i];
            if c == 0 {
                continue;
            }
            let f = if i == lo_bin || i == hi_bin {
                self.axis.overlap_fraction(i, &clamped)
            } else {
                1.0
            };
            mass += c as f64 / self.total as f64 * f;
        }
        mass
    }

    pub fn add(&mut self, v: i64) {
        if !self.flat {
            self.counts[self.axis.bin_of(v)] += 1;
            self.total += 1;
        }
    }

    pub fn remove(&mut self, v: i64) {
        if !self.flat {
            let i = self.axis.bin_of(v);
            self.counts[i] = self.counts[i].saturating_sub(1);
            self.total = self.total.saturating_sub(1);
        }
    }
}

/// Sparse k-dimensional grid estimator for joint nodes. Cells are stored
/// sparsely keyed by per-axis bin coordinates; box mass is the sum of cell
/// masses scaled by per-dimension integer overlap fractions, which keeps
/// inference exact over full domains and monotone in the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGrid {
    pub axes: Vec<Axis>,
    #[serde(with = "cell_pairs")]
    cells: BTreeMap<Vec<u32>, u64>,
    total: u64,
    pub flat: bool,
}

/// JSON object keys must be strings; encode grid cells as coordinate/count
/// pairs instead.
mod cell_pairs {
    use super::BTreeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        cells: &BTreeMap<Vec<u32>, u64>,
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(&Vec<u32>, &u64)> = cells.iter().collect();
        pairs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<BTreeMap<Vec<u32>, u64>, D::Error> {
        let pairs: Vec<(Vec<u32>, u64)> = Vec::deserialize(de)?;
        Ok(pairs.into_iter().collect())
    }
}

impl SparseGrid {
    pub fn build<'a>(
        domains: &[Interval],
        bins: usize,
        rows: impl Iterator<Item = &'a [i64]>,
    ) -> SparseGrid {
        let axes: Vec<Axis> = domains.iter().map(|d| Axis::new(*d, bins)).collect();
        let mut cells: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
        let mut total = 0;
        for row in rows {
            let cell: Vec<u32> = axes.iter().zip(row).map(|(a, &v)| a.bin_of(v) as u32).collect();
            *cells.entry(cell).or_insert(0) += 1;
            total += 1;
        }
        SparseGrid { axes, cells, total, flat: false }
    }

    pub fn flat(domains: &[Interval]) -> SparseGrid {
        SparseGrid {
            axes: domains.iter().map(|d| Axis::new(*d, 1)).collect(),
            cells: BTreeMap::new(),
            total: 0,
            flat: true,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Mass of the axis-aligned box (one optional interval per grid
    /// dimension, in axis order).
    pub fn mass(&self, query: &[Option<Interval>]) -> f64 {
        debug_assert_eq!(query.len(), self.axes.len());
        if self.flat {
            let mut m = 1.0;
            for (axis, q) in self.axes.iter().zip(query) {
                if let Some(q) = q {
                    m *= match q.intersect(&axis.domain) {
                        Some(iv) => iv.width() as f64 / axis.domain.width() as f64,
                        None => return 0.0,
                    };
                }
            }
            return m;
        }
        if self.total == 0 {
            return 0.0;
        }
        let mut mass = 0.0;
        'cell: for (cell, &count) in &self.cells {
            let mut frac = count as f64 / self.total as f64;
            for ((axis, q), &bin) in self.axes.iter().zip(query).zip(cell) {
                if let Some(q) = q {
                    let f = axis.overlap_fraction(bin as usize, q);
                    if f == 0.0 {
                        continue 'cell;
                    }
                    frac *= f;
                }
            }
            mass += frac;
        }
        mass
    }

    pub fn add(&mut self, row: &[i64]) {
        if self.flat {
            return;
        }
        let cell: Vec<u32> = self.axes.iter().zip(row).map(|(a, &v)| a.bin_of(v) as u32).collect();
        *self.cells.entry(cell).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn remove(&mut self, row: &[i64]) {
        if self.flat {
            return;
        }
        let cell: Vec<u32> = self.axes.iter().zip(row).map(|(a, &v)| a.bin_of(v) as u32).collect();
        if let Some(c) = self.cells.get_mut(&cell) {
            *c -= 1;
            if *c == 0 {
                self.cells.remove(&cell);
            }
            self.total -= 1;
        }
    }
}
