//! Single-site latent updates under a dense correlation with the factors
//! integrated out.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::columns::LatentMoments;
use crate::error::{Error, Result};
use crate::kernels::{condition_number, sample_truncated_normal, ConditionalMoments, TruncationInterval};

/// Full conditionals of `N(alpha, c)` read off the precision matrix:
/// `E[z_j | z_-j] = α_j − Σ_{k≠j} P_jk (z_k − α_k) / P_jj`,
/// `Var[z_j | z_-j] = 1 / P_jj`.
#[derive(Debug, Clone)]
pub struct DenseConditional {
    precision: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl DenseConditional {
    pub fn new(c: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<Self> {
        let condition = condition_number(c);
        if condition > crate::kernels::gaussian::MAX_CONDITION {
            return Err(Error::SingularSubmatrix { condition });
        }
        let precision = c.clone().cholesky().ok_or(Error::SingularSubmatrix { condition })?.inverse();
        Ok(Self { precision, alpha: alpha.clone() })
    }

    pub fn moments(&self, z: &[f64], j: usize) -> ConditionalMoments {
        let pjj = self.precision[(j, j)];
        let shift: f64 = (0..z.len())
            .filter(|&k| k != j)
            .map(|k| self.precision[(j, k)] * (z[k] - self.alpha[k]))
            .sum();
        ConditionalMoments::new(self.alpha[j] - shift / pjj, 1.0 / pjj)
    }
}

impl LatentMoments for DenseConditional {
    fn moments(&self, z: &DMatrix<f64>, i: usize, j: usize) -> ConditionalMoments {
        let pjj = self.precision[(j, j)];
        let shift: f64 = (0..z.ncols())
            .filter(|&k| k != j)
            .map(|k| self.precision[(j, k)] * (z[(i, k)] - self.alpha[k]))
            .sum();
        ConditionalMoments::new(self.alpha[j] - shift / pjj, 1.0 / pjj)
    }

    fn independent(&self) -> bool {
        false
    }

    /// `N(α_B − P_BB⁻¹ P_B,rest (z_rest − α_rest), P_BB⁻¹)`.
    fn block(&self, z: &DMatrix<f64>, i: usize, first: usize, len: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let block = first..first + len;
        let pbb = self.precision.view((first, first), (len, len)).into_owned();
        let cov = pbb.cholesky()?.inverse();
        let shift = DVector::from_fn(len, |b, _| {
            (0..z.ncols())
                .filter(|k| !block.contains(k))
                .map(|k| self.precision[(first + b, k)] * (z[(i, k)] - self.alpha[k]))
                .sum::<f64>()
        });
        let mean = DVector::from_fn(len, |b, _| self.alpha[first + b]) - &cov * shift;
        Some((mean, cov))
    }
}

/// One scan over every row and coordinate of `z`. `intervals[j][i]` is the
/// restriction of latent `(i, j)`; `None` keeps it fixed.
pub fn dense_latent_sweep<R: Rng + ?Sized>(
    rng: &mut R,
    cond: &DenseConditional,
    z: &mut DMatrix<f64>,
    intervals: &[Vec<Option<TruncationInterval>>],
) {
    let d = z.ncols();
    let mut row = vec![0.0; d];
    for i in 0..z.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = z[(i, j)];
        }
        for j in 0..d {
            if let Some(iv) = intervals[j][i] {
                row[j] = sample_truncated_normal(rng, cond.moments(&row, j), iv);
            }
        }
        for (j, r) in row.iter().enumerate() {
            z[(i, j)] = *r;
        }
    }
}
