//! Latent factor representation of the copula correlation,
//! `z_i = α + Λ η_i + ε_i`, with a multiplicative gamma process shrinkage
//! prior on the loadings and conjugate Gibbs updates for every block.
//!
//! Prior:
//!
//! ```text
//! δ_1 ~ Gamma(a1, 1),  δ_l ~ Gamma(a2, 1) (l ≥ 2),  ξ_h = ∏_{l ≤ h} δ_l
//! φ_jh ~ Gamma(ν/2, ν/2),  λ_jh ~ N(0, 1/(φ_jh ξ_h))
//! η_i ~ N_k(0, I),  σ_j⁻² ~ Gamma(a_σ, b_σ),  α_j ~ N(0, 1) (free columns)
//! ```
//!
//! Intercepts are free only for probit-type columns (binary study
//! variables, categorical levels, missingness indicators); numeric study
//! columns keep `α_j = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cholesky_with_jitter, sample_gaussian_canonical};

/// Prior hyperparameters and factor rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub a1: f64,
    pub a2: f64,
    pub nu: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Number of factors; `None` means full rank (`k = d`).
    pub rank: Option<usize>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { a1: 2.0, a2: 3.0, nu: 3.0, a_sigma: 1.0, b_sigma: 0.3, rank: None }
    }
}

impl Hyperparameters {
    pub fn rank_for(&self, d: usize) -> usize {
        self.rank.unwrap_or(d).max(1)
    }
}

fn gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("gamma parameters are positive").sample(rng)
}

/// Parameters of the factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    /// `d × k` loadings.
    pub loadings: DMatrix<f64>,
    /// Idiosyncratic variances.
    pub sigma2: DVector<f64>,
    /// `n × k` factors.
    pub factors: DMatrix<f64>,
    /// Intercepts on the latent scale.
    pub alpha: DVector<f64>,
    /// Which intercepts are free parameters.
    pub free_intercept: Vec<bool>,
    /// `d × k` local shrinkage.
    pub phi: DMatrix<f64>,
    pub delta: DVector<f64>,
    /// Running products of `delta`.
    pub xi: DVector<f64>,
}

impl FactorState {
    /// Starting state: small random loadings, unit variances, zero factors.
    pub fn initial<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        d: usize,
        k: usize,
        free_intercept: Vec<bool>,
        alpha: DVector<f64>,
    ) -> Self {
        let normal = Normal::new(0.0, 0.1).unwrap();
        let loadings = DMatrix::from_fn(d, k, |_, _| normal.sample(rng));
        let delta = DVector::from_element(k, 1.0);
        Self {
            loadings,
            sigma2: DVector::from_element(d, 1.0),
            factors: DMatrix::zeros(n, k),
            alpha,
            free_intercept,
            phi: DMatrix::from_element(d, k, 1.0),
            xi: running_product(&delta),
            delta,
        }
    }

    /// Draws every parameter from the prior.
    pub fn from_prior<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        d: usize,
        hyper: &Hyperparameters,
        free_intercept: Vec<bool>,
    ) -> Self {
        let k = hyper.rank_for(d);
        let delta = DVector::from_fn(k, |h, _| gamma_rate(rng, if h == 0 { hyper.a1 } else { hyper.a2 }, 1.0));
        let xi = running_product(&delta);
        let phi = DMatrix::from_fn(d, k, |_, _| gamma_rate(rng, hyper.nu / 2.0, hyper.nu / 2.0));
        let loadings = DMatrix::from_fn(d, k, |j, h| {
            let w: f64 = StandardNormal.sample(rng);
            w / (phi[(j, h)] * xi[h]).sqrt()
        });
        let sigma2 = DVector::from_fn(d, |_, _| 1.0 / gamma_rate(rng, hyper.a_sigma, hyper.b_sigma));
        let factors = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(rng));
        let alpha =
            DVector::from_fn(d, |j, _| if free_intercept[j] { StandardNormal.sample(rng) } else { 0.0 });
        Self { loadings, sigma2, factors, alpha, free_intercept, phi, delta, xi }
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.factors.nrows()
    }

    /// `Ω = ΛΛᵀ + Σ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut omega = &self.loadings * self.loadings.transpose();
        for j in 0..self.dim() {
            omega[(j, j)] += self.sigma2[j];
        }
        omega
    }

    /// Marginal standard deviations `√Ω_jj`.
    pub fn scales(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |j, _| {
            (self.loadings.row(j).norm_squared() + self.sigma2[j]).sqrt()
        })
    }

    /// Copula correlation `D^{-1/2} Ω D^{-1/2}`.
    pub fn correlation(&self) -> DMatrix<f64> {
        correlation_from_covariance(&self.covariance())
    }

    /// Intercepts on the correlation scale, `α_j / √Ω_jj`.
    pub fn standardized_alpha(&self) -> DVector<f64> {
        self.alpha.component_div(&self.scales())
    }

    /// Conditional mean of latent `(i, j)` given the factors, working scale.
    #[inline]
    pub fn conditional_mean(&self, i: usize, j: usize) -> f64 {
        self.alpha[j] + self.loadings.row(j).dot(&self.factors.row(i))
    }

    /// Samples row `j` of Λ given latent column `z_j` (working scale).
    pub fn update_loadings_row<R: Rng + ?Sized>(&mut self, rng: &mut R, z_j: &[f64], j: usize) -> Result<()> {
        let gram = self.factors.transpose() * &self.factors;
        self.update_loadings_row_with(rng, z_j, j, &gram)
    }

    fn update_loadings_row_with<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        z_j: &[f64],
        j: usize,
        gram: &DMatrix<f64>,
    ) -> Result<()> {
        let k = self.rank();
        let prec_j = 1.0 / self.sigma2[j];
        let mut precision = gram * prec_j;
        for h in 0..k {
            precision[(h, h)] += self.phi[(j, h)] * self.xi[h];
        }
        let alpha_j = self.alpha[j];
        let mut linear = DVector::zeros(k);
        for (i, &z) in z_j.iter().enumerate() {
            let r = (z - alpha_j) * prec_j;
            for h in 0..k {
                linear[h] += self.factors[(i, h)] * r;
            }
        }
        let row = sample_gaussian_canonical(rng, &precision, &linear)?;
        self.loadings.set_row(j, &row.transpose());
        Ok(())
    }

    /// Samples every row of Λ given the `n × d` latent matrix.
    pub fn update_loadings<R: Rng + ?Sized>(&mut self, rng: &mut R, z: &DMatrix<f64>) -> Result<()> {
        let gram = self.factors.transpose() * &self.factors;
        for j in 0..self.dim() {
            let col: Vec<f64> = z.column(j).iter().copied().collect();
            self.update_loadings_row_with(rng, &col, j, &gram)?;
        }
        Ok(())
    }

    /// Residual sum of squares of latent column `j`.
    fn rss(&self, z_j: &[f64], j: usize) -> f64 {
        z_j.iter().enumerate().map(|(i, &z)| (z - self.conditional_mean(i, j)).powi(2)).sum()
    }

    /// Samples `σ_j²` from its inverse-gamma full conditional.
    pub fn update_sigma2<R: Rng + ?Sized>(&mut self, rng: &mut R, z_j: &[f64], j: usize, hyper: &Hyperparameters) {
        let n = z_j.len() as f64;
        let rss = self.rss(z_j, j);
        let precision = gamma_rate(rng, hyper.a_sigma + n / 2.0, hyper.b_sigma + 0.5 * rss);
        self.sigma2[j] = 1.0 / precision;
    }

    pub fn update_all_sigma2<R: Rng + ?Sized>(&mut self, rng: &mut R, z: &DMatrix<f64>, hyper: &Hyperparameters) {
        for j in 0..self.dim() {
            let col: Vec<f64> = z.column(j).iter().copied().collect();
            self.update_sigma2(rng, &col, j, hyper);
        }
    }

    /// Samples all factor rows. The posterior precision
    /// `I + ΛᵀΣ⁻¹Λ` is shared across rows and factored once.
    pub fn update_factors<R: Rng + ?Sized>(&mut self, rng: &mut R, z: &DMatrix<f64>) -> Result<()> {
        let n = z.nrows();
        let k = self.rank();
        let weighted = DMatrix::from_fn(self.dim(), k, |j, h| self.loadings[(j, h)] / self.sigma2[j]);
        let mut precision = self.loadings.transpose() * &weighted;
        for h in 0..k {
            precision[(h, h)] += 1.0;
        }
        let chol = cholesky_with_jitter(&precision)?;
        let upper = chol.l().transpose();
        let mut centered = z.clone();
        for j in 0..self.dim() {
            let a = self.alpha[j];
            centered.column_mut(j).add_scalar_mut(-a);
        }
        // Rows of (Z − 1αᵀ) Σ⁻¹ Λ are the linear terms.
        let linear = &centered * &weighted;
        let mut factors = DMatrix::zeros(n, k);
        for i in 0..n {
            let b = linear.row(i).transpose();
            let mean = chol.solve(&b);
            let w = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
            let noise = upper
                .solve_upper_triangular(&w)
                .ok_or(Error::SingularSubmatrix { condition: f64::INFINITY })?;
            factors.set_row(i, &(mean + noise).transpose());
        }
        self.factors = factors;
        Ok(())
    }

    /// Samples factor row `i` alone.
    pub fn update_factor_row<R: Rng + ?Sized>(&mut self, rng: &mut R, z_i: &[f64], i: usize) -> Result<()> {
        let k = self.rank();
        let mut precision = DMatrix::identity(k, k);
        let mut linear = DVector::zeros(k);
        for j in 0..self.dim() {
            let lam = self.loadings.row(j).transpose();
            precision += &lam * lam.transpose() / self.sigma2[j];
            linear += &lam * ((z_i[j] - self.alpha[j]) / self.sigma2[j]);
        }
        let row = sample_gaussian_canonical(rng, &precision, &linear)?;
        self.factors.set_row(i, &row.transpose());
        Ok(())
    }

    /// Samples the local (`φ`) and global (`δ`) shrinkage parameters and
    /// refreshes `ξ`.
    pub fn update_shrinkage<R: Rng + ?Sized>(&mut self, rng: &mut R, hyper: &Hyperparameters) {
        let d = self.dim();
        let k = self.rank();
        for j in 0..d {
            for h in 0..k {
                let lam = self.loadings[(j, h)];
                self.phi[(j, h)] = gamma_rate(rng, (hyper.nu + 1.0) / 2.0, (hyper.nu + self.xi[h] * lam * lam) / 2.0);
            }
        }
        // Column sums Σ_j φ_jl λ_jl².
        let col_sums: Vec<f64> =
            (0..k).map(|l| (0..d).map(|j| self.phi[(j, l)] * self.loadings[(j, l)].powi(2)).sum()).collect();
        for h in 0..k {
            // ξ_l^{(h)} = ∏_{t ≤ l, t ≠ h} δ_t for l ≥ h.
            let mut partial = (0..h).map(|t| self.delta[t]).product::<f64>();
            let mut rate = 1.0;
            for l in h..k {
                if l > h {
                    partial *= self.delta[l];
                }
                rate += 0.5 * partial * col_sums[l];
            }
            let prior_shape = if h == 0 { hyper.a1 } else { hyper.a2 };
            let shape = prior_shape + 0.5 * (d * (k - h)) as f64;
            self.delta[h] = gamma_rate(rng, shape, rate);
        }
        self.xi = running_product(&self.delta);
    }

    /// Samples free intercept `j` given latent column `z_j`.
    pub fn update_intercept<R: Rng + ?Sized>(&mut self, rng: &mut R, z_j: &[f64], j: usize) -> Result<()> {
        if !self.free_intercept[j] {
            return Err(Error::Contract(format!("intercept {j} is fixed at zero for numeric study columns")));
        }
        let prec_j = 1.0 / self.sigma2[j];
        let n = z_j.len() as f64;
        let resid: f64 = z_j
            .iter()
            .enumerate()
            .map(|(i, &z)| z - self.loadings.row(j).dot(&self.factors.row(i)))
            .sum();
        let var = 1.0 / (n * prec_j + 1.0);
        let mean = var * prec_j * resid;
        let w: f64 = StandardNormal.sample(rng);
        self.alpha[j] = mean + var.sqrt() * w;
        Ok(())
    }

    /// Samples every free intercept.
    pub fn update_intercepts<R: Rng + ?Sized>(&mut self, rng: &mut R, z: &DMatrix<f64>) -> Result<()> {
        for j in 0..self.dim() {
            if self.free_intercept[j] {
                let col: Vec<f64> = z.column(j).iter().copied().collect();
                self.update_intercept(rng, &col, j)?;
            }
        }
        Ok(())
    }

    /// One full parameter sweep given the latent matrix, in the order
    /// loadings, variances, factors, shrinkage, intercepts.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R, z: &DMatrix<f64>, hyper: &Hyperparameters) -> Result<()> {
        self.update_loadings(rng, z)?;
        self.update_all_sigma2(rng, z, hyper);
        self.update_factors(rng, z)?;
        self.update_shrinkage(rng, hyper);
        self.update_intercepts(rng, z)
    }
}

/// Running product of `delta`.
pub fn running_product(delta: &DVector<f64>) -> DVector<f64> {
    let mut acc = 1.0;
    DVector::from_iterator(
        delta.len(),
        delta.iter().map(|&x| {
            acc *= x;
            acc
        }),
    )
}

/// Rescales a covariance matrix to unit diagonal.
pub fn correlation_from_covariance(omega: &DMatrix<f64>) -> DMatrix<f64> {
    let d = omega.nrows();
    let inv_sd: Vec<f64> = (0..d).map(|j| 1.0 / omega[(j, j)].sqrt()).collect();
    DMatrix::from_fn(d, d, |a, b| if a == b { 1.0 } else { omega[(a, b)] * inv_sd[a] * inv_sd[b] })
}

/// Copula correlation induced by a factor state.
pub fn correlation_from_factor(state: &FactorState) -> DMatrix<f64> {
    state.correlation()
}
