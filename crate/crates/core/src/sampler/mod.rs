//! Data-augmentation Gibbs sampler for the copula: alternates the factor
//! parameter updates with latent updates restricted by quantile bins,
//! probit signs and diagonal orthants.
//!
//! Latents are held on the correlation (unit-variance) scale, where the
//! quantile thresholds `Φ⁻¹(τ)` live, and are drawn from `N(α/s, C)` with
//! `s_j = √Ω_jj`. The factor parameters are then updated treating the
//! latents as draws from `N(α, Ω)`. The unit-variance latents keep `Ω`
//! near correlation scale, so the non-identified scales cannot drift.
//!
//! By default the latents are drawn with the factors integrated out, from
//! single-site conditionals of the implied dense correlation, and the
//! factors are drawn afterwards given the new latents. Drawing latents given
//! the factors instead mixes badly at full rank, where the idiosyncratic
//! variances are small.

mod columns;
mod dense;
mod layout;

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use columns::{categorical_probabilities, eql_bounds, ehql_bounds, FactorMoments, LatentMoments, LatentSampler};
pub use dense::{dense_latent_sweep, DenseConditional};
pub use layout::{LatentLayout, LatentRole};

use crate::error::{Error, Result};
use crate::factor::{FactorState, Hyperparameters};
use crate::types::{AugmentedQuantiles, AuxiliaryQuantileSet, ColumnKind, Dataset, Marginal, DEFAULT_CANDIDATE_BINS};

/// How observed numeric values enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// Known marginal CDFs; observed latents are fixed.
    #[serde(alias = "full")]
    FullMarginal,
    /// Bins of the auxiliary quantiles.
    Eql,
    /// Bins of the auxiliary quantiles plus intermediate points with
    /// ordering restrictions.
    #[default]
    Ehql,
}

impl FromStr for LikelihoodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full_marginal" | "full-marginal" => Ok(Self::FullMarginal),
            "eql" => Ok(Self::Eql),
            "ehql" => Ok(Self::Ehql),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected full, eql or ehql)"))),
        }
    }
}

/// Marginal information for one column: auxiliary quantiles for the
/// quantile modes, a known CDF for the full-marginal mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMargin {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxiliaryQuantileSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known: Option<Marginal>,
}

impl ColumnMargin {
    pub fn aux(aux: AuxiliaryQuantileSet) -> Self {
        Self { aux: Some(aux), known: None }
    }

    pub fn known(marginal: Marginal) -> Self {
        Self { aux: None, known: Some(marginal) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub mode: LikelihoodMode,
    pub hyper: Hyperparameters,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Evenly spaced candidate bins for intermediate points.
    pub candidate_bins: usize,
    /// Keep missing-cell values for multiple imputation.
    pub record_imputations: bool,
    /// Draw latents with the factors integrated out.
    pub collapsed: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            mode: LikelihoodMode::Ehql,
            hyper: Hyperparameters::default(),
            iters: 5000,
            burnin: 2500,
            thin: 1,
            seed: 0,
            candidate_bins: DEFAULT_CANDIDATE_BINS,
            record_imputations: true,
            collapsed: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters > 0 && self.burnin >= self.iters {
            return Err(Error::Config(format!("burnin ({}) must be below iters ({})", self.burnin, self.iters)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let Some(0) = self.hyper.rank {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of draws retained after burn-in and thinning.
    pub fn retained(&self) -> usize {
        self.iters.saturating_sub(self.burnin) / self.thin
    }
}

/// How missing cells of a study column are mapped back to the data scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MarginSource {
    /// Binary or categorical columns.
    Discrete,
    Known { marginal: Marginal },
    /// Known `(value, level)` knots; hybrid draws add their own levels.
    Quantiles { knots: Vec<(f64, f64)>, discrete: bool },
}

/// Parameters recorded at one sweep, on the correlation scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub sweep: usize,
    pub correlation: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Estimated `(value, level)` pairs at intermediate points per study
    /// column (hybrid mode).
    pub levels: Vec<Vec<(f64, f64)>>,
}

/// Missing-cell values at one sweep, per study column in missing-row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationDraw {
    pub sweep: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOutput {
    pub layout: LatentLayout,
    pub config: ChainConfig,
    pub margins: Vec<MarginSource>,
    pub missing_rows: Vec<Vec<usize>>,
    pub initial: PosteriorDraw,
    pub draws: Vec<PosteriorDraw>,
    pub imputations: Vec<ImputationDraw>,
}

impl PosteriorOutput {
    /// Posterior mean of the copula correlation over retained draws.
    pub fn mean_correlation(&self) -> DMatrix<f64> {
        mean_of(self.draws.iter().map(|d| &d.correlation)).unwrap_or_else(|| self.initial.correlation.clone())
    }

    /// Draws of entry `(a, b)` of the correlation.
    pub fn correlation_trace(&self, a: usize, b: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.correlation[(a, b)]).collect()
    }

    /// Known and estimated knots of study column `j` at retained draw `k`.
    pub fn knots(&self, j: usize, k: usize) -> Option<Vec<(f64, f64)>> {
        match &self.margins[j] {
            MarginSource::Quantiles { knots, .. } => {
                let mut all = knots.clone();
                all.extend_from_slice(&self.draws[k].levels[j]);
                Some(all)
            }
            _ => None,
        }
    }
}

fn mean_of<'a>(mut it: impl Iterator<Item = &'a DMatrix<f64>>) -> Option<DMatrix<f64>> {
    let first = it.next()?.clone();
    let (sum, count) = it.fold((first, 1usize), |(acc, c), m| (acc + m, c + 1));
    Some(sum / count as f64)
}

fn margin_sources(data: &Dataset, margins: &[ColumnMargin], mode: LikelihoodMode) -> Vec<MarginSource> {
    data.schemas()
        .iter()
        .zip(margins)
        .map(|(s, m)| match (&s.kind, mode) {
            (ColumnKind::Binary | ColumnKind::Categorical { .. }, _) => MarginSource::Discrete,
            (_, LikelihoodMode::FullMarginal) => {
                MarginSource::Known { marginal: m.known.expect("validated by the latent sampler") }
            }
            _ => {
                let aux = m.aux.as_ref().expect("validated by the latent sampler");
                let knots = AugmentedQuantiles::from(aux)
                    .edges()
                    .iter()
                    .map(|e| (e.value, e.tau.expect("known edge")))
                    .collect();
                MarginSource::Quantiles { knots, discrete: s.kind.is_discrete() }
            }
        })
        .collect()
}

fn in_chain(sweep: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Chain { sweep, source: Box::new(e) }
}

/// Runs one chain. Deterministic given `config.seed`.
pub fn run_chain(data: &Dataset, margins: &[ColumnMargin], config: &ChainConfig) -> Result<PosteriorOutput> {
    config.validate()?;
    let mut latents = LatentSampler::new(data, margins, config.mode, config.candidate_bins)?;
    let layout = latents.layout().clone();
    let (n, d) = (data.n_rows(), layout.dim());
    let k = config.hyper.rank_for(d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut z, alpha0) = latents.initial();
    let mut state = FactorState::initial(&mut rng, n, d, k, layout.free_intercepts(), alpha0);

    let record = |sweep: usize, state: &FactorState, latents: &LatentSampler, z: &DMatrix<f64>| PosteriorDraw {
        sweep,
        correlation: state.correlation(),
        alpha: state.standardized_alpha(),
        levels: latents.marginal_levels(z),
    };
    let initial = record(0, &state, &latents, &z);
    let mut draws = Vec::with_capacity(config.retained());
    let mut imputations = Vec::new();
    for sweep in 1..=config.iters {
        if config.collapsed {
            state.update_loadings(&mut rng, &z).map_err(in_chain(sweep))?;
            state.update_all_sigma2(&mut rng, &z, &config.hyper);
            match DenseConditional::new(&state.correlation(), &state.standardized_alpha()) {
                Ok(dense) => latents.update_with(&mut rng, &dense, &mut z),
                // Near-singular correlation: the factor conditionals stay valid.
                Err(Error::SingularSubmatrix { .. }) => latents.update(&mut rng, &state, &mut z),
                Err(e) => Err(e),
            }
            .map_err(in_chain(sweep))?;
            state.update_factors(&mut rng, &z).map_err(in_chain(sweep))?;
            state.update_shrinkage(&mut rng, &config.hyper);
            state.update_intercepts(&mut rng, &z).map_err(in_chain(sweep))?;
        } else {
            state.sweep(&mut rng, &z, &config.hyper).map_err(in_chain(sweep))?;
            latents.update(&mut rng, &state, &mut z).map_err(in_chain(sweep))?;
        }
        if sweep > config.burnin && (sweep - config.burnin) % config.thin == 0 {
            draws.push(record(sweep, &state, &latents, &z));
            if config.record_imputations {
                imputations.push(ImputationDraw { sweep, values: latents.missing_values(&z) });
            }
        }
    }
    Ok(PosteriorOutput {
        layout,
        config: config.clone(),
        margins: margin_sources(data, margins, config.mode),
        missing_rows: (0..data.n_cols()).map(|j| data.missing_rows(j)).collect(),
        initial,
        draws,
        imputations,
    })
}

#[cfg(test)]
mod tests;
