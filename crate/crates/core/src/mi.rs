//! Completed datasets from posterior draws and pooled inference across
//! imputations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::kernels::{cholesky_with_jitter, condition_number, std_normal_cdf};
use crate::sampler::{MarginSource, PosteriorOutput};
use crate::spline::{fit_monotone, inverse_eval};
use crate::types::{ColumnKind, Dataset};

/// A dataset with every missing cell filled, and the sweep it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset {
    pub data: Dataset,
    pub sweep: usize,
}

/// Fills the missing cells of `data` from recorded imputation draw `k`:
/// numeric cells by `F̃⁻¹(Φ(z))`, binary cells by the latent sign and
/// categorical cells by the sampled level.
pub fn impute_from_draw(data: &Dataset, output: &PosteriorOutput, k: usize) -> Result<CompletedDataset> {
    let imp = output
        .imputations
        .get(k)
        .ok_or(Error::InsufficientDraws { needed: k + 1, available: output.imputations.len() })?;
    let draw = output
        .draws
        .iter()
        .position(|d| d.sweep == imp.sweep)
        .ok_or_else(|| Error::Contract(format!("no parameter draw at sweep {}", imp.sweep)))?;
    let mut columns: Vec<Vec<Option<f64>>> = data.columns().to_vec();
    for (j, col) in columns.iter_mut().enumerate() {
        let rows = &output.missing_rows[j];
        if rows.is_empty() {
            continue;
        }
        let values = &imp.values[j];
        let fill: Box<dyn Fn(f64) -> f64> = match (&output.margins[j], &data.schema(j).kind) {
            (MarginSource::Discrete, ColumnKind::Binary) => Box::new(|z| if z > 0.0 { 1.0 } else { 0.0 }),
            (MarginSource::Discrete, _) => Box::new(|level| level),
            (MarginSource::Known { marginal }, _) => {
                let m = *marginal;
                Box::new(move |z| m.from_latent(z))
            }
            (MarginSource::Quantiles { discrete, .. }, _) => {
                let knots = output.knots(j, draw).expect("quantile margin");
                let est = fit_monotone(&knots)?;
                let discrete = *discrete;
                Box::new(move |z| inverse_eval(&est, std_normal_cdf(z), discrete))
            }
        };
        for (&i, &v) in rows.iter().zip(values) {
            col[i] = Some(fill(v));
        }
    }
    Ok(CompletedDataset { data: Dataset::new(data.schemas().to_vec(), columns)?, sweep: imp.sweep })
}

/// Default number of completed datasets.
pub const DEFAULT_M: usize = 20;
/// Default spacing between the retained sweeps used for imputation.
pub const DEFAULT_SPACING: usize = 125;

/// Indices of the `m` recorded draws used for imputation: every
/// `spacing`-th draw counted back from the last one.
pub fn imputation_indices(available: usize, m: usize, spacing: usize) -> Result<Vec<usize>> {
    if m == 0 || spacing == 0 {
        return Err(Error::Config("m and spacing must be at least 1".into()));
    }
    let needed = m * spacing;
    if needed > available {
        return Err(Error::InsufficientDraws { needed, available });
    }
    Ok((1..=m).map(|k| available - (m - k) * spacing - 1).collect())
}

/// `m` completed datasets at evenly spaced retained sweeps.
pub fn make_imputations(
    data: &Dataset,
    output: &PosteriorOutput,
    m: usize,
    spacing: usize,
) -> Result<Vec<CompletedDataset>> {
    imputation_indices(output.imputations.len(), m, spacing)?
        .into_iter()
        .map(|k| impute_from_draw(data, output, k))
        .collect()
}

/// Rubin's combination of per-imputation estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub qbar: f64,
    pub between: f64,
    pub within: f64,
    pub total: f64,
    /// Degrees of freedom of the t reference; infinite when the
    /// imputations agree exactly.
    pub df: f64,
    pub ci: (f64, f64),
}

pub fn rubin_combine(estimates: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::TooFewImputations(m));
    }
    if variances.len() != m {
        return Err(Error::Contract("estimates and variances differ in length".into()));
    }
    let mf = m as f64;
    // Centered on the first estimate, so identical estimates give exactly
    // zero between-imputation variance.
    let q0 = estimates[0];
    let shift = estimates.iter().map(|q| q - q0).sum::<f64>() / mf;
    let qbar = q0 + shift;
    let within = variances.iter().sum::<f64>() / mf;
    let between = estimates.iter().map(|q| (q - q0 - shift).powi(2)).sum::<f64>() / (mf - 1.0);
    let inflated = (1.0 + 1.0 / mf) * between;
    let total = within + inflated;
    let df = if between == 0.0 { f64::INFINITY } else { (mf - 1.0) * (1.0 + within / inflated).powi(2) };
    let half = t_quantile(0.975, df) * total.sqrt();
    Ok(PooledEstimate { qbar, between, within, total, df, ci: (qbar - half, qbar + half) })
}

fn t_quantile(p: f64, df: f64) -> f64 {
    if !df.is_finite() || df > 1e7 {
        return crate::kernels::std_normal_quantile(p);
    }
    StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(p)
}

/// Regression coefficients with per-coefficient sampling variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Design matrix with an intercept. Numeric covariates are optionally
/// centered and scaled to standard deviation 0.5; categorical covariates
/// enter as dummies against their first level.
pub fn design(
    data: &Dataset,
    response: usize,
    covariates: &[usize],
    scale_numeric: bool,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<String>)> {
    let n = data.n_rows();
    let value = |i: usize, j: usize| {
        data.get(i, j).ok_or_else(|| Error::Data(format!("column {} has missing cells", data.schema(j).name)))
    };
    if !data.schema(response).kind.is_numeric() && data.schema(response).kind != ColumnKind::Binary {
        return Err(Error::Config("response must be numeric or binary".into()));
    }
    let y = DVector::from_iterator(n, (0..n).map(|i| value(i, response)).collect::<Result<Vec<_>>>()?);
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec!["(intercept)".to_string()];
    for &j in covariates {
        let s = data.schema(j);
        let raw: Vec<f64> = (0..n).map(|i| value(i, j)).collect::<Result<_>>()?;
        match &s.kind {
            ColumnKind::Categorical { levels } => {
                for (c, level) in levels.iter().enumerate().skip(1) {
                    cols.push(raw.iter().map(|&v| if v as usize == c { 1.0 } else { 0.0 }).collect());
                    names.push(format!("{}[{}]", s.name, level));
                }
            }
            ColumnKind::Binary => {
                cols.push(raw);
                names.push(s.name.clone());
            }
            _ => {
                let v = if scale_numeric { scale_half(&raw) } else { raw };
                cols.push(v);
                names.push(s.name.clone());
            }
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
    Ok((x, y, names))
}

fn scale_half(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter().map(|x| 0.5 * (x - mean) / sd).collect()
}

/// Least squares with classical variances `σ̂² (XᵀX)⁻¹`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, p) = x.shape();
    let gram = x.transpose() * x;
    if n < p || condition_number(&gram) > 1e12 {
        return Err(Error::RankDeficient);
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let beta = chol.solve(&(x.transpose() * y));
    let resid = y - x * &beta;
    let sigma2 = if n > p { resid.norm_squared() / (n - p) as f64 } else { 0.0 };
    let var = chol.inverse().diagonal() * sigma2;
    Ok((beta, var))
}

pub fn fit_ols(data: &Dataset, response: usize, covariates: &[usize], scale_numeric: bool) -> Result<RegressionFit> {
    let (x, y, names) = design(data, response, covariates, scale_numeric)?;
    let (beta, var) = ols(&x, &y)?;
    Ok(RegressionFit { names, coefficients: beta.iter().copied().collect(), variances: var.iter().copied().collect() })
}

/// Check-function loss `Σ ρ_τ(y − Xβ)`.
pub fn pinball_loss(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: f64) -> f64 {
    (y - x * beta).iter().map(|&r| if r >= 0.0 { tau * r } else { (tau - 1.0) * r }).sum()
}

const QR_MAX_ITER: usize = 500;

/// Quantile regression: reweighted least squares on a smoothed check loss
/// with shrinking smoothing, then exchange steps between interpolating
/// bases until no exchange lowers the loss.
pub fn quantile_fit(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("quantile level {tau} outside (0, 1)")));
    }
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient);
    }
    let (mut beta, _) = ols(x, y)?;
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut eps = 1e-2 * scale;
    for _ in 0..200 {
        let r = y - x * &beta;
        let w: Vec<f64> = r.iter().map(|&ri| (if ri >= 0.0 { tau } else { 1.0 - tau }) / ri.abs().max(eps)).collect();
        let xw = DMatrix::from_fn(n, p, |i, c| x[(i, c)] * w[i]);
        let gram = x.transpose() * &xw;
        let Ok(chol) = cholesky_with_jitter(&gram) else { break };
        let next = chol.solve(&(xw.transpose() * y));
        let change = (&next - &beta).amax();
        beta = next;
        eps = (eps * 0.5).max(1e-10 * scale);
        if change < 1e-12 * scale && eps <= 1e-10 * scale {
            break;
        }
    }
    polish(x, y, tau, beta)
}

fn polish(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64, start: DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let mut r = y - x * &start;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()));
    let solve = |basis: &[usize]| -> Option<DVector<f64>> {
        let xb = x.select_rows(basis);
        let yb = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
        xb.lu().solve(&yb).filter(|b| b.iter().all(|v| v.is_finite()))
    };
    // Initial basis: the p best-fitting rows that give a nonsingular system.
    let mut basis: Vec<usize> = Vec::with_capacity(p);
    for &i in &order {
        basis.push(i);
        if basis.len() == p {
            if solve(&basis).is_some() {
                break;
            }
            basis.pop();
        }
    }
    let mut best = start.clone();
    let mut best_loss = pinball_loss(x, y, &best, tau);
    if basis.len() == p {
        if let Some(b) = solve(&basis) {
            let l = pinball_loss(x, y, &b, tau);
            if l <= best_loss {
                best = b;
                best_loss = l;
            }
        }
    } else {
        return Ok(best);
    }
    let tol = 1e-12 * (1.0 + best_loss);
    let width = n.min(4 * p + 20);
    for _ in 0..QR_MAX_ITER {
        r = y - x * &best;
        order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()));
        let mut improved = false;
        'search: for slot in 0..p {
            for &c in order.iter().take(width) {
                if basis.contains(&c) {
                    continue;
                }
                let mut trial = basis.clone();
                trial[slot] = c;
                if let Some(b) = solve(&trial) {
                    let l = pinball_loss(x, y, &b, tau);
                    if l < best_loss - tol {
                        basis = trial;
                        best = b;
                        best_loss = l;
                        improved = true;
                        break 'search;
                    }
                }
            }
        }
        if !improved {
            return Ok(best);
        }
    }
    Err(Error::NonConvergence { iterations: QR_MAX_ITER })
}

/// Default number of bootstrap resamples for quantile-regression variances.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Quantile regression with bootstrap variances over resampled rows.
pub fn fit_quantile_regression(
    data: &Dataset,
    tau: f64,
    response: usize,
    covariates: &[usize],
    scale_numeric: bool,
    resamples: usize,
    seed: u64,
) -> Result<RegressionFit> {
    let (x, y, names) = design(data, response, covariates, scale_numeric)?;
    let beta = quantile_fit(&x, &y, tau)?;
    let n = x.nrows();
    let p = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot: Vec<DVector<f64>> = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let xb = x.select_rows(&rows);
        let yb = DVector::from_iterator(n, rows.iter().map(|&i| y[i]));
        match quantile_fit(&xb, &yb, tau) {
            Ok(b) => boot.push(b),
            Err(Error::RankDeficient) => continue,
            Err(e) => return Err(e),
        }
    }
    let variances = (0..p)
        .map(|c| {
            let b = boot.len() as f64;
            if b < 2.0 {
                return f64::NAN;
            }
            let mean = boot.iter().map(|v| v[c]).sum::<f64>() / b;
            boot.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (b - 1.0)
        })
        .collect();
    Ok(RegressionFit { names, coefficients: beta.iter().copied().collect(), variances })
}
