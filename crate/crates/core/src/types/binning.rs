//! Coarsening of observed values into quantile bins and the latent
//! intervals those bins imply.

use serde::{Deserialize, Serialize};

use super::quantiles::{AugmentedQuantiles, AuxiliaryQuantileSet};
use crate::error::{Error, Result};
use crate::kernels::{std_normal_quantile, TruncationInterval};

/// One bin `(value_lo, value_hi]` with the levels of the nearest known
/// quantiles enclosing it. For bins between two known quantiles these are
/// exactly `F(value_lo)` and `F(value_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinInterval {
    pub value_lo: f64,
    pub value_hi: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    /// Whether `value_hi` is a known quantile (as opposed to an
    /// intermediate point).
    pub hi_known: bool,
}

impl BinInterval {
    /// `(Φ⁻¹(tau_lo), Φ⁻¹(tau_hi)]`; the outermost bins extend to ∓∞.
    pub fn latent_interval(&self) -> TruncationInterval {
        TruncationInterval { lo: std_normal_quantile(self.tau_lo), hi: std_normal_quantile(self.tau_hi) }
    }
}

/// Bin table of a column plus the (0-based) bin of every observed entry,
/// in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedColumn {
    bins: Vec<BinInterval>,
    assignments: Vec<usize>,
}

impl BinnedColumn {
    pub fn bins(&self) -> &[BinInterval] {
        &self.bins
    }

    pub fn bin(&self, q: usize) -> &BinInterval {
        &self.bins[q]
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Bin of observed entry `entry`.
    pub fn bin_of_entry(&self, entry: usize) -> usize {
        self.assignments[entry]
    }

    pub fn latent_interval(&self, q: usize) -> TruncationInterval {
        self.bins[q].latent_interval()
    }

    /// Entry indices grouped by bin.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.bins.len()];
        for (entry, &q) in self.assignments.iter().enumerate() {
            out[q].push(entry);
        }
        out
    }

    /// Bin containing `y` under the `(lo, hi]` convention; the global lower
    /// bound belongs to the first bin.
    pub fn locate(&self, y: f64) -> Result<usize> {
        locate(&self.bins, y)
    }
}

fn locate(bins: &[BinInterval], y: f64) -> Result<usize> {
    let lower = bins[0].value_lo;
    let upper = bins[bins.len() - 1].value_hi;
    if !(y >= lower && y <= upper) {
        return Err(Error::OutOfSupport { value: y, lower, upper });
    }
    // First bin whose upper edge is >= y.
    let q = bins.partition_point(|b| b.value_hi < y);
    Ok(q.min(bins.len() - 1))
}

/// Bins observed values against known quantiles only.
pub fn build_bins(aux: &AuxiliaryQuantileSet, observed: &[f64]) -> Result<BinnedColumn> {
    bin_values(&AugmentedQuantiles::from(aux), observed)
}

/// Bins observed values against an augmented quantile set.
pub fn bin_values(edges: &AugmentedQuantiles, observed: &[f64]) -> Result<BinnedColumn> {
    let e = edges.edges();
    let bins: Vec<BinInterval> = (0..e.len() - 1)
        .map(|q| {
            let tau_lo = e[..=q].iter().rev().find_map(|x| x.tau).unwrap_or(0.0);
            let tau_hi = e[q + 1..].iter().find_map(|x| x.tau).unwrap_or(1.0);
            BinInterval {
                value_lo: e[q].value,
                value_hi: e[q + 1].value,
                tau_lo,
                tau_hi,
                hi_known: e[q + 1].is_known(),
            }
        })
        .collect();
    let assignments = observed.iter().map(|&y| locate(&bins, y)).collect::<Result<Vec<_>>>()?;
    Ok(BinnedColumn { bins, assignments })
}
