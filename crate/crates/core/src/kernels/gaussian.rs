//! Gaussian conditioning and linear-algebra helpers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::normal::std_normal_cdf;
use super::truncnorm::ConditionalMoments;
use crate::error::{Error, Result};

/// Condition number above which a conditioning block is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Diagonal jitter tried, in order, before a factorization is declared
/// singular.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization of a symmetric positive definite matrix, adding
/// increasing diagonal jitter when the plain factorization fails.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    for &eps in JITTER_LADDER.iter() {
        let mut a = m.clone();
        if eps > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += eps;
            }
        }
        if let Some(chol) = Cholesky::new(a) {
            let l = chol.l_dirty();
            if (0..l.nrows()).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0) {
                return Ok(chol);
            }
        }
    }
    Err(Error::SingularSubmatrix { condition: condition_number(m) })
}

/// Spectral condition number of a symmetric matrix (infinite when not PD).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Draws `x ~ N(P⁻¹ b, P⁻¹)` given the precision `P` and linear term `b`.
pub fn sample_gaussian_canonical<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(precision)?;
    let mean = chol.solve(linear);
    let w = DVector::from_fn(linear.len(), |_, _| StandardNormal.sample(rng));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&w)
        .ok_or(Error::SingularSubmatrix { condition: f64::INFINITY })?;
    Ok(mean + noise)
}

fn drop_index(len: usize, j: usize) -> Vec<usize> {
    (0..len).filter(|&k| k != j).collect()
}

/// Exact Gaussian full conditional of coordinate `j` of `z ~ N(alpha, c)`
/// given the remaining coordinates.
pub fn conditional_moments(
    c: &DMatrix<f64>,
    alpha: &DVector<f64>,
    z: &DVector<f64>,
    j: usize,
) -> Result<ConditionalMoments> {
    let d = c.nrows();
    if c.ncols() != d || alpha.len() != d || z.len() != d || j >= d {
        return Err(Error::Contract("conditional_moments: dimension mismatch".into()));
    }
    if d == 1 {
        return Ok(ConditionalMoments::new(alpha[0], c[(0, 0)]));
    }
    let rest = drop_index(d, j);
    let block = c.select_rows(&rest).select_columns(&rest);
    let cross = DVector::from_iterator(d - 1, rest.iter().map(|&k| c[(k, j)]));
    let dev = DVector::from_iterator(d - 1, rest.iter().map(|&k| z[k] - alpha[k]));
    let condition = condition_number(&block);
    if condition > MAX_CONDITION {
        return Err(Error::SingularSubmatrix { condition });
    }
    let chol = Cholesky::new(block).ok_or(Error::SingularSubmatrix { condition })?;
    let weights = chol.solve(&cross);
    let mu = alpha[j] + weights.dot(&dev);
    let sigma2 = c[(j, j)] - weights.dot(&cross);
    Ok(ConditionalMoments::new(mu, sigma2.max(0.0)))
}

/// Probability that the missingness indicator fires given the study
/// latents, under the probit copula for `(z_y, z_r)`.
///
/// `c_sub` is the `(p+1)×(p+1)` correlation of `(z_y, z_r)` with the
/// indicator last; `alpha_r` is the indicator intercept on the correlation
/// scale and the study latents have mean zero.
pub fn missingness_probability(c_sub: &DMatrix<f64>, alpha_r: f64, z_y: &DVector<f64>) -> Result<f64> {
    let p = z_y.len();
    if c_sub.nrows() != p + 1 || c_sub.ncols() != p + 1 {
        return Err(Error::Contract("missingness_probability: dimension mismatch".into()));
    }
    let mut alpha = DVector::zeros(p + 1);
    alpha[p] = alpha_r;
    let mut z = DVector::zeros(p + 1);
    z.rows_mut(0, p).copy_from(z_y);
    let m = conditional_moments(c_sub, &alpha, &z, p)?;
    if m.sigma2 == 0.0 {
        return Ok(if m.mu > 0.0 { 1.0 } else { 0.0 });
    }
    // P(z_r > 0) = 1 − Φ((0 − α*)/σ*).
    Ok(std_normal_cdf(m.mu / m.sd()))
}
