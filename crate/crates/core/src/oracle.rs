//! Verification-only estimators: empirical cell tables of variables
//! discretized at fixed latent cutpoints, and the pairwise polychoric
//! correlation MLE.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{bivariate_normal_rect, normal_interval_mass, std_normal_quantile};
use crate::types::{build_bins, AuxiliaryQuantileSet, Dataset};

/// Boundary guard on the correlation.
pub const RHO_EPS: f64 = 1e-4;

/// Contingency table of two discretized latent normals. Cutpoint vectors
/// include the outer `∓∞`, so `row_cuts.len() == rows + 1`. Observations
/// with only one category known go to the margin vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub row_cuts: Vec<f64>,
    pub col_cuts: Vec<f64>,
    pub counts: DMatrix<u64>,
    /// Row known, column unknown.
    pub row_only: Vec<u64>,
    /// Column known, row unknown.
    pub col_only: Vec<u64>,
}

impl CellTable {
    pub fn new(row_cuts: Vec<f64>, col_cuts: Vec<f64>) -> Result<Self> {
        for cuts in [&row_cuts, &col_cuts] {
            if cuts.len() < 2 || cuts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Contract("cell table cutpoints must be strictly increasing".into()));
            }
        }
        let (r, c) = (row_cuts.len() - 1, col_cuts.len() - 1);
        Ok(Self { row_cuts, col_cuts, counts: DMatrix::zeros(r, c), row_only: vec![0; r], col_only: vec![0; c] })
    }

    pub fn rows(&self) -> usize {
        self.counts.nrows()
    }

    pub fn cols(&self) -> usize {
        self.counts.ncols()
    }

    /// Observations in the table, including the margins.
    pub fn total(&self) -> u64 {
        self.counts.sum() + self.row_only.iter().sum::<u64>() + self.col_only.iter().sum::<u64>()
    }

    /// Normalized joint cells over complete pairs; `None` when there are
    /// none.
    pub fn probabilities(&self) -> Option<DMatrix<f64>> {
        let n = self.counts.sum();
        (n > 0).then(|| self.counts.map(|c| c as f64 / n as f64))
    }

    /// Model probability of cell `(q, k)` under correlation `rho`.
    pub fn cell_probability(&self, rho: f64, q: usize, k: usize) -> f64 {
        bivariate_normal_rect(rho, self.row_cuts[q], self.row_cuts[q + 1], self.col_cuts[k], self.col_cuts[k + 1])
    }

    /// Log likelihood in `rho`. Margin-only observations contribute
    /// `rho`-free terms under fixed cutpoints.
    pub fn log_likelihood(&self, rho: f64) -> f64 {
        let mut ll = 0.0;
        for (cuts, counts) in [(&self.row_cuts, &self.row_only), (&self.col_cuts, &self.col_only)] {
            for (q, &c) in counts.iter().enumerate() {
                if c > 0 {
                    ll += c as f64 * normal_interval_mass(cuts[q], cuts[q + 1]).max(f64::MIN_POSITIVE).ln();
                }
            }
        }
        for q in 0..self.rows() {
            for k in 0..self.cols() {
                let c = self.counts[(q, k)];
                if c > 0 {
                    ll += c as f64 * self.cell_probability(rho, q, k).max(f64::MIN_POSITIVE).ln();
                }
            }
        }
        ll
    }
}

/// Table from per-observation categories (`None` = unknown) and fixed
/// cutpoints.
pub fn empirical_cells(
    rows: &[Option<usize>],
    cols: &[Option<usize>],
    row_cuts: Vec<f64>,
    col_cuts: Vec<f64>,
) -> Result<CellTable> {
    if rows.len() != cols.len() {
        return Err(Error::Contract("empirical_cells: category vectors differ in length".into()));
    }
    let mut t = CellTable::new(row_cuts, col_cuts)?;
    for (&a, &b) in rows.iter().zip(cols) {
        match (a, b) {
            (Some(q), Some(k)) => t.counts[(q, k)] += 1,
            (Some(q), None) => t.row_only[q] += 1,
            (None, Some(k)) => t.col_only[k] += 1,
            (None, None) => {}
        }
    }
    Ok(t)
}

/// Maximizes the table likelihood over `(−1 + ε, 1 − ε)` by golden-section
/// search. Needs two occupied joint cells and both variables observed in
/// at least two categories (margin-only observations count).
pub fn polychoric_mle(table: &CellTable) -> Result<f64> {
    let occupied = table.counts.iter().filter(|&&c| c > 0).count();
    let rows_seen = (0..table.rows()).filter(|&q| table.counts.row(q).sum() + table.row_only[q] > 0).count();
    let cols_seen = (0..table.cols()).filter(|&k| table.counts.column(k).sum() + table.col_only[k] > 0).count();
    if occupied < 2 || rows_seen < 2 || cols_seen < 2 {
        return Err(Error::Contract("polychoric_mle needs two occupied cells and variation in both variables".into()));
    }
    let f = |rho: f64| -table.log_likelihood(rho);
    let (mut a, mut b) = (-1.0 + RHO_EPS, 1.0 - RHO_EPS);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-9 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let rho = 0.5 * (a + b);
    if rho.abs() >= 1.0 - RHO_EPS - 1e-6 {
        return Err(Error::BoundaryEstimate { rho });
    }
    Ok(rho)
}

/// A discretized latent variable of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "column", rename_all = "snake_case")]
pub enum OracleVariable {
    /// Study column cut at the latent images of its known quantiles.
    Binned(usize),
    /// Missingness indicator cut at `Φ⁻¹(1 − missing rate)`.
    Indicator(usize),
}

fn discretize(data: &Dataset, aux: &[Option<AuxiliaryQuantileSet>], v: OracleVariable) -> Result<(Vec<Option<usize>>, Vec<f64>)> {
    match v {
        OracleVariable::Binned(j) => {
            let a = aux
                .get(j)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::Config(format!("column {} has no auxiliary quantiles", data.schema(j).name)))?;
            let obs = data.observed(j);
            let values: Vec<f64> = obs.iter().map(|o| o.1).collect();
            let binned = build_bins(a, &values)?;
            let mut cats = vec![None; data.n_rows()];
            for (e, &(i, _)) in obs.iter().enumerate() {
                cats[i] = Some(binned.bin_of_entry(e));
            }
            let mut cuts: Vec<f64> = binned.bins().iter().map(|b| std_normal_quantile(b.tau_lo)).collect();
            cuts.push(f64::INFINITY);
            Ok((cats, cuts))
        }
        OracleVariable::Indicator(j) => {
            let mask = data.mask(j);
            let rate = mask.iter().filter(|&&m| m).count() as f64 / mask.len().max(1) as f64;
            let cut = std_normal_quantile(1.0 - rate);
            Ok((mask.into_iter().map(|m| Some(m as usize)).collect(), vec![f64::NEG_INFINITY, cut, f64::INFINITY]))
        }
    }
}

/// Cell table of two dataset variables.
pub fn pair_table(data: &Dataset, aux: &[Option<AuxiliaryQuantileSet>], a: OracleVariable, b: OracleVariable) -> Result<CellTable> {
    let (ra, ca) = discretize(data, aux, a)?;
    let (rb, cb) = discretize(data, aux, b)?;
    empirical_cells(&ra, &rb, ca, cb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    const INF: f64 = f64::INFINITY;

    fn median_table(rho: f64, n: usize, seed: u64) -> CellTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (1.0 - rho * rho).sqrt();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            a.push(Some((x > 0.0) as usize));
            b.push(Some((rho * x + s * e > 0.0) as usize));
        }
        empirical_cells(&a, &b, vec![-INF, 0.0, INF], vec![-INF, 0.0, INF]).unwrap()
    }

    #[test]
    fn independent_cells_are_quarters() {
        let p = median_table(0.0, 100_000, 1).probabilities().unwrap();
        for v in p.iter() {
            assert!((v - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn correlated_orthant_cells() {
        let p = median_table(0.5, 100_000, 2).probabilities().unwrap();
        let want = 0.25 + f64::asin(0.5) / (2.0 * PI);
        assert!((want - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[(0, 0)] - want).abs() < 0.01 && (p[(1, 1)] - want).abs() < 0.01);
    }

    #[test]
    fn empty_table() {
        let t = empirical_cells(&[], &[], vec![-INF, 0.0, INF], vec![-INF, INF]).unwrap();
        assert_eq!(t.total(), 0);
        assert!(t.probabilities().is_none());
        assert!(polychoric_mle(&t).is_err());
    }

    #[test]
    fn cutpoints_must_increase() {
        assert!(CellTable::new(vec![-INF, 1.0, 0.0, INF], vec![-INF, INF]).is_err());
    }

    #[test]
    fn concordant_table_hits_the_boundary() {
        let mut t = CellTable::new(vec![-INF, 0.0, INF], vec![-INF, 0.0, INF]).unwrap();
        t.counts[(0, 0)] = 50;
        t.counts[(1, 1)] = 50;
        match polychoric_mle(&t) {
            Err(Error::BoundaryEstimate { rho }) => assert!(rho > 0.999),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recovers_simulated_correlation() {
        let r = polychoric_mle(&median_table(0.5, 100_000, 3)).unwrap();
        assert!((r - 0.5).abs() < 0.01, "{r}");
        let r = polychoric_mle(&median_table(0.0, 100_000, 4)).unwrap();
        assert!(r.abs() < 0.01, "{r}");
    }

    #[test]
    fn closed_form_on_exact_median_table() {
        // Cells in exact orthant proportions give the generating rho back.
        let rho: f64 = -0.35;
        let same = 0.25 + rho.asin() / (2.0 * PI);
        let mut t = CellTable::new(vec![-INF, 0.0, INF], vec![-INF, 0.0, INF]).unwrap();
        let n = 1e9;
        t.counts[(0, 0)] = (same * n).round() as u64;
        t.counts[(1, 1)] = (same * n).round() as u64;
        t.counts[(0, 1)] = ((0.5 - same) * n).round() as u64;
        t.counts[(1, 0)] = ((0.5 - same) * n).round() as u64;
        assert!((polychoric_mle(&t).unwrap() - rho).abs() < 1e-6);
    }

    #[test]
    fn own_indicator_table_uses_the_margin() {
        // Column observed only when its indicator is 0.
        let rho: f64 = 0.6;
        let same = 0.25 + rho.asin() / (2.0 * PI);
        let n = 1e8;
        let mut t = CellTable::new(vec![-INF, 0.0, INF], vec![-INF, 0.0, INF]).unwrap();
        t.counts[(0, 0)] = (same * n).round() as u64;
        t.counts[(1, 0)] = ((0.5 - same) * n).round() as u64;
        t.col_only[1] = (0.5 * n) as u64;
        assert!((polychoric_mle(&t).unwrap() - rho).abs() < 1e-5);
        t.col_only[1] = 0;
        assert!(polychoric_mle(&t).is_err());
    }

    #[test]
    fn likelihood_is_unimodal_for_two_by_two() {
        let t = median_table(0.3, 2000, 5);
        let grid: Vec<f64> = (1..200).map(|i| -1.0 + i as f64 * 0.01).collect();
        let ll: Vec<f64> = grid.iter().map(|&r| t.log_likelihood(r)).collect();
        let peak = ll.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(ll[..=peak].windows(2).all(|w| w[1] >= w[0]));
        assert!(ll[peak..].windows(2).all(|w| w[1] <= w[0]));
    }
}
