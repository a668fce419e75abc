//! Auxiliary marginal quantiles and their augmentation with intermediate
//! points whose levels are inferred by the sampler.

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, ColumnSchema};
use crate::error::{Error, Result};

/// One known quantile `F⁻¹(tau) = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxPoint {
    pub tau: f64,
    pub value: f64,
}

impl From<(f64, f64)> for AuxPoint {
    fn from((tau, value): (f64, f64)) -> Self {
        Self { tau, value }
    }
}

/// Validated set of known quantiles for one column, always including the
/// support bounds at `tau = 0` and `tau = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AuxPoint>", into = "Vec<AuxPoint>")]
pub struct AuxiliaryQuantileSet {
    entries: Vec<AuxPoint>,
}

impl TryFrom<Vec<AuxPoint>> for AuxiliaryQuantileSet {
    type Error = Error;

    fn try_from(entries: Vec<AuxPoint>) -> Result<Self> {
        check_entries("<unnamed>", false, false, entries)
    }
}

impl From<AuxiliaryQuantileSet> for Vec<AuxPoint> {
    fn from(set: AuxiliaryQuantileSet) -> Self {
        set.entries
    }
}

/// Validates quantiles against a column schema.
pub fn validate_aux(schema: &ColumnSchema, entries: Vec<AuxPoint>) -> Result<AuxiliaryQuantileSet> {
    let discrete = schema.kind.is_discrete();
    let integer = schema.kind == ColumnKind::Count;
    check_entries(&schema.name, discrete, integer, entries)
}

fn check_entries(column: &str, discrete: bool, integer: bool, entries: Vec<AuxPoint>) -> Result<AuxiliaryQuantileSet> {
    let column = column.to_string();
    if entries.len() < 3 {
        return Err(Error::TooFew { column, count: entries.len() });
    }
    for e in &entries {
        if !(0.0..=1.0).contains(&e.tau) || !e.value.is_finite() {
            return Err(Error::NonMonotone {
                column,
                detail: format!("entry ({}, {}) is not a finite value at a level in [0, 1]", e.tau, e.value),
            });
        }
        if integer && e.value.fract() != 0.0 {
            return Err(Error::Data(format!("column `{column}`: count quantile {} is not an integer", e.value)));
        }
    }
    for w in entries.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.tau <= a.tau {
            return Err(Error::NonMonotone { column, detail: format!("tau {} follows tau {}", b.tau, a.tau) });
        }
        if b.value < a.value || (!discrete && b.value == a.value) {
            return Err(Error::NonMonotone {
                column,
                detail: format!("value {} at tau {} follows value {}", b.value, b.tau, a.value),
            });
        }
    }
    if entries[0].tau != 0.0 || entries[entries.len() - 1].tau != 1.0 {
        return Err(Error::MissingBounds { column });
    }
    Ok(AuxiliaryQuantileSet { entries })
}

impl AuxiliaryQuantileSet {
    pub fn entries(&self) -> &[AuxPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.entries[0].value
    }

    pub fn upper(&self) -> f64 {
        self.entries[self.entries.len() - 1].value
    }

    /// Quantile set from a known quantile function at interior levels
    /// plus explicit support bounds.
    pub fn from_quantile_fn(
        schema: &ColumnSchema,
        taus: &[f64],
        lower: f64,
        upper: f64,
        quantile: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mut entries = vec![AuxPoint { tau: 0.0, value: lower }];
        entries.extend(taus.iter().map(|&t| AuxPoint { tau: t, value: quantile(t) }));
        entries.push(AuxPoint { tau: 1.0, value: upper });
        validate_aux(schema, entries)
    }

    /// Empirical quantiles of `values` at interior levels `taus`, with the
    /// sample minimum and maximum as bounds (type-7 interpolation). Count
    /// columns round to integers and carry the empirical CDF at each value,
    /// so every pair satisfies `F(value) = tau`.
    pub fn empirical(schema: &ColumnSchema, values: &[f64], taus: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data(format!("column `{}`: no observed values", schema.name)));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let bottom = sorted[0];
        let top = sorted[sorted.len() - 1];
        let mut entries = vec![AuxPoint { tau: 0.0, value: bottom }];
        if schema.kind == ColumnKind::Count {
            for &t in taus {
                let v = empirical_quantile(&sorted, t).round();
                let level = sorted.partition_point(|&x| x <= v) as f64 / n;
                let last = entries[entries.len() - 1];
                if v > last.value && level > last.tau && level < 1.0 {
                    entries.push(AuxPoint { tau: level, value: v });
                }
            }
        } else {
            for &t in taus {
                let v = empirical_quantile(&sorted, t);
                if v > entries[entries.len() - 1].value && v < top {
                    entries.push(AuxPoint { tau: t, value: v });
                }
            }
        }
        entries.push(AuxPoint { tau: 1.0, value: top });
        validate_aux(schema, entries)
    }
}

/// Type-7 empirical quantile of sorted data.
pub fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * tau.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// An edge of the augmented quantile set. Intermediate edges have unknown
/// level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEdge {
    pub value: f64,
    pub tau: Option<f64>,
}

impl QuantileEdge {
    pub fn is_known(&self) -> bool {
        self.tau.is_some()
    }
}

/// Known quantiles together with intermediate points, sorted by value with
/// distinct values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedQuantiles {
    edges: Vec<QuantileEdge>,
}

impl From<&AuxiliaryQuantileSet> for AugmentedQuantiles {
    /// Repeated values (point masses of discrete columns) collapse to one
    /// edge carrying the largest level.
    fn from(aux: &AuxiliaryQuantileSet) -> Self {
        let mut edges: Vec<QuantileEdge> = Vec::with_capacity(aux.len());
        for e in aux.entries() {
            match edges.last_mut() {
                Some(last) if last.value == e.value => last.tau = Some(e.tau),
                _ => edges.push(QuantileEdge { value: e.value, tau: Some(e.tau) }),
            }
        }
        Self { edges }
    }
}

impl AugmentedQuantiles {
    pub fn edges(&self) -> &[QuantileEdge] {
        &self.edges
    }

    pub fn lower(&self) -> f64 {
        self.edges[0].value
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.edges.len() - 1].value
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn n_intermediate(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_known()).count()
    }

    /// Values of the intermediate (unknown-level) edges.
    pub fn intermediate_values(&self) -> Vec<f64> {
        self.edges.iter().filter(|e| !e.is_known()).map(|e| e.value).collect()
    }
}

/// Default number of evenly spaced candidate bins for intermediate points.
pub const DEFAULT_CANDIDATE_BINS: usize = 20;

/// Adds intermediate points to `aux`: the interior edges of
/// `candidate_bins` evenly spaced bins over the observed range, keeping an
/// edge only when the bin below it holds at least one observation. Count
/// columns use distinct integer edges strictly inside the observed range.
pub fn augment_with_intermediate(
    aux: &AuxiliaryQuantileSet,
    observed: &[f64],
    kind: &ColumnKind,
    candidate_bins: usize,
) -> AugmentedQuantiles {
    let mut augmented = AugmentedQuantiles::from(aux);
    if observed.is_empty() || candidate_bins < 2 {
        return augmented;
    }
    let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return augmented;
    }
    let width = (max - min) / candidate_bins as f64;
    let mut occupied = vec![false; candidate_bins];
    for &y in observed {
        let k = (((y - min) / width).floor() as usize).min(candidate_bins - 1);
        occupied[k] = true;
    }
    let integer = *kind == ColumnKind::Count;
    let mut candidates: Vec<f64> = (1..candidate_bins)
        .filter(|&k| occupied[k - 1])
        .map(|k| {
            let e = min + width * k as f64;
            if integer {
                e.round()
            } else {
                e
            }
        })
        .filter(|&e| e > min && e < max)
        .collect();
    candidates.dedup();
    for value in candidates {
        if value <= augmented.lower() || value >= augmented.upper() {
            continue;
        }
        let pos = augmented.edges.partition_point(|e| e.value < value);
        if augmented.edges[pos].value != value {
            augmented.edges.insert(pos, QuantileEdge { value, tau: None });
        }
    }
    augmented
}
