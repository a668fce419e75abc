//! Latent-data updates under the set restrictions of each column.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::layout::LatentLayout;
use super::{ColumnMargin, LikelihoodMode};
use crate::error::{Error, Result};
use crate::factor::FactorState;
use crate::kernels::{
    sample_truncated_normal, std_normal_cdf, std_normal_quantile, ConditionalMoments, TruncationInterval,
};
use crate::spline::estimate_levels;
use crate::types::{
    augment_with_intermediate, bin_values, known_marginal_transform, validate_aux, AugmentedQuantiles,
    BinnedColumn, ColumnKind, Dataset,
};

/// Latent interval of an observed entry under the quantile likelihood.
pub fn eql_bounds(binned: &BinnedColumn, entry: usize) -> TruncationInterval {
    binned.latent_interval(binned.bin_of_entry(entry))
}

/// Latent interval of an observed entry under the hybrid likelihood: the
/// known-quantile interval of its bin, tightened by the current latents of
/// the nearest occupied bins below and above so that bin order carries over
/// to latent order. `z_obs` holds the current latents of all observed
/// entries in binning order.
pub fn ehql_bounds(binned: &BinnedColumn, z_obs: &[f64], entry: usize) -> TruncationInterval {
    let q = binned.bin_of_entry(entry);
    let known = binned.latent_interval(q);
    let a = binned.assignments();
    let below = a.iter().copied().filter(|&b| b < q).max();
    let above = a.iter().copied().filter(|&b| b > q).min();
    let extreme = |bin: Option<usize>, init: f64, pick: fn(f64, f64) -> f64| {
        bin.map_or(init, |b| a.iter().zip(z_obs).filter(|(&x, _)| x == b).fold(init, |m, (_, &z)| pick(m, z)))
    };
    let lo = extreme(below, f64::NEG_INFINITY, f64::max);
    let hi = extreme(above, f64::INFINITY, f64::min);
    TruncationInterval { lo: known.lo.max(lo), hi: known.hi.min(if hi.is_finite() { hi.next_down() } else { hi }) }
}

#[derive(Debug, Clone)]
struct BinnedLatents {
    rows: Vec<usize>,
    bins: BinnedColumn,
    occupied: Vec<usize>,
    members: Vec<Vec<usize>>,
    ordered: bool,
}

impl BinnedLatents {
    fn new(edges: &AugmentedQuantiles, observed: &[(usize, f64)], ordered: bool) -> Result<Self> {
        let values: Vec<f64> = observed.iter().map(|&(_, y)| y).collect();
        let bins = bin_values(edges, &values)?;
        let rows: Vec<usize> = observed.iter().map(|&(i, _)| i).collect();
        let mut members = vec![Vec::new(); bins.n_bins()];
        for (entry, &q) in bins.assignments().iter().enumerate() {
            members[q].push(rows[entry]);
        }
        let occupied = (0..bins.n_bins()).filter(|&q| !members[q].is_empty()).collect();
        Ok(Self { rows, bins, occupied, members, ordered })
    }

    /// Feasible start: within each stretch between known quantiles, the
    /// occupied bins split the level range in proportion to their counts
    /// and take `Φ⁻¹` of their share's midpoint.
    fn initialize(&self, col: &mut [f64]) {
        let mut start = 0;
        while start < self.occupied.len() {
            let b0 = self.bins.bin(self.occupied[start]);
            let mut end = start;
            while end < self.occupied.len() {
                let b = self.bins.bin(self.occupied[end]);
                if b.tau_lo != b0.tau_lo || b.tau_hi != b0.tau_hi {
                    break;
                }
                end += 1;
            }
            let total: usize = self.occupied[start..end].iter().map(|&q| self.members[q].len()).sum();
            let mut cum = 0usize;
            for &q in &self.occupied[start..end] {
                let c = self.members[q].len();
                let mid = (cum as f64 + 0.5 * c as f64) / total as f64;
                let tau = b0.tau_lo + (b0.tau_hi - b0.tau_lo) * mid;
                let z = std_normal_quantile(tau);
                for &i in &self.members[q] {
                    col[i] = z;
                }
                cum += c;
            }
            start = end;
        }
    }

    fn update<R: Rng + ?Sized, M: LatentMoments>(&self, rng: &mut R, z: &mut DMatrix<f64>, j: usize, m: &M) -> Result<()> {
        let mut prev_max = f64::NEG_INFINITY;
        for (idx, &q) in self.occupied.iter().enumerate() {
            let known = self.bins.latent_interval(q);
            let (lo, hi) = if self.ordered {
                let next_min = self.occupied.get(idx + 1).map_or(f64::INFINITY, |&q2| {
                    self.members[q2].iter().map(|&i| z[(i, j)]).fold(f64::INFINITY, f64::min).next_down()
                });
                (known.lo.max(prev_max), known.hi.min(next_min))
            } else {
                (known.lo, known.hi)
            };
            if !(lo < hi) {
                return Err(Error::Contract(format!("empty latent interval ({lo}, {hi}] in bin {q}")));
            }
            let interval = TruncationInterval { lo, hi };
            let mut max = f64::NEG_INFINITY;
            for &i in &self.members[q] {
                let v = sample_truncated_normal(rng, m.moments(z, i, j), interval);
                z[(i, j)] = v;
                max = max.max(v);
            }
            prev_max = max;
        }
        Ok(())
    }

    fn z_obs(&self, col: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&i| col[i]).collect()
    }
}

#[derive(Debug, Clone)]
enum ColumnModel {
    /// Latents fixed at `Φ⁻¹(F(y))` for observed entries.
    Fixed { latent: usize, observed: Vec<(usize, f64)>, missing: Vec<usize> },
    Binned { latent: usize, binned: BinnedLatents, missing: Vec<usize> },
    Binary { latent: usize, observed: Vec<(usize, bool)>, missing: Vec<usize> },
    Categorical { first: usize, n_levels: usize, observed: Vec<(usize, usize)>, missing: Vec<usize> },
}

/// The set restrictions implied by a dataset under a likelihood mode, and
/// the latent updates that respect them.
#[derive(Debug, Clone)]
pub struct LatentSampler {
    layout: LatentLayout,
    columns: Vec<ColumnModel>,
    indicators: Vec<(usize, Vec<bool>)>,
    n: usize,
    /// Current level of each missing categorical cell, per column.
    levels: Vec<Vec<usize>>,
}

impl LatentSampler {
    pub fn new(
        data: &Dataset,
        margins: &[ColumnMargin],
        mode: LikelihoodMode,
        candidate_bins: usize,
    ) -> Result<Self> {
        if margins.len() != data.n_cols() {
            return Err(Error::Config(format!(
                "{} margin specifications for {} columns",
                margins.len(),
                data.n_cols()
            )));
        }
        let layout = LatentLayout::new(data.schemas());
        let mut columns = Vec::with_capacity(data.n_cols());
        let mut indicators = Vec::new();
        let mut levels = Vec::with_capacity(data.n_cols());
        for (j, schema) in data.schemas().iter().enumerate() {
            schema.check()?;
            let latent = layout.study(j).start;
            let missing = data.missing_rows(j);
            let observed = data.observed(j);
            levels.push(Vec::new());
            let model = match &schema.kind {
                ColumnKind::Continuous | ColumnKind::Count => match mode {
                    LikelihoodMode::FullMarginal => {
                        if schema.kind != ColumnKind::Continuous {
                            return Err(Error::Config(format!(
                                "column {}: full-marginal mode needs continuous margins",
                                schema.name
                            )));
                        }
                        let f = margins[j].known.as_ref().ok_or_else(|| {
                            Error::Config(format!("column {}: full-marginal mode needs a known CDF", schema.name))
                        })?;
                        let observed = observed
                            .iter()
                            .map(|&(i, y)| Ok((i, known_marginal_transform(f, y)?)))
                            .collect::<Result<Vec<_>>>()?;
                        ColumnModel::Fixed { latent, observed, missing }
                    }
                    LikelihoodMode::Eql | LikelihoodMode::Ehql => {
                        let aux = margins[j].aux.as_ref().ok_or_else(|| {
                            Error::Config(format!("column {}: quantile modes need auxiliary quantiles", schema.name))
                        })?;
                        let aux = validate_aux(schema, aux.entries().to_vec())?;
                        let values: Vec<f64> = observed.iter().map(|&(_, y)| y).collect();
                        let ordered = mode == LikelihoodMode::Ehql;
                        let edges = if ordered {
                            augment_with_intermediate(&aux, &values, &schema.kind, candidate_bins)
                        } else {
                            AugmentedQuantiles::from(&aux)
                        };
                        let binned = BinnedLatents::new(&edges, &observed, ordered)
                            .map_err(|e| Error::Data(format!("column {}: {e}", schema.name)))?;
                        ColumnModel::Binned { latent, binned, missing }
                    }
                },
                ColumnKind::Binary => ColumnModel::Binary {
                    latent,
                    observed: observed.iter().map(|&(i, y)| (i, y == 1.0)).collect(),
                    missing,
                },
                ColumnKind::Categorical { levels: names } => {
                    let obs: Vec<(usize, usize)> = observed.iter().map(|&(i, y)| (i, y as usize)).collect();
                    let mut freq = vec![0usize; names.len()];
                    obs.iter().for_each(|&(_, c)| freq[c] += 1);
                    let mode_level = (0..names.len()).max_by_key(|&c| (freq[c], std::cmp::Reverse(c))).unwrap_or(0);
                    levels[j] = vec![mode_level; missing.len()];
                    ColumnModel::Categorical { first: latent, n_levels: names.len(), observed: obs, missing }
                }
            };
            columns.push(model);
            if let Some(r) = layout.indicator(j) {
                indicators.push((r, data.mask(j)));
            }
        }
        Ok(Self { layout, columns, indicators, n: data.n_rows(), levels })
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    /// Starting latents and starting intercepts.
    pub fn initial(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let d = self.layout.dim();
        let mut z = DMatrix::zeros(n, d);
        let mut alpha = DVector::zeros(d);
        let clamp = |p: f64| p.clamp(0.5 / n.max(1) as f64, 1.0 - 0.5 / n.max(1) as f64);
        for (j, model) in self.columns.iter().enumerate() {
            match model {
                ColumnModel::Fixed { latent, observed, .. } => {
                    let col = column_mut(&mut z, *latent);
                    for &(i, v) in observed {
                        col[i] = v;
                    }
                }
                ColumnModel::Binned { latent, binned, .. } => binned.initialize(column_mut(&mut z, *latent)),
                ColumnModel::Binary { latent, observed, .. } => {
                    let col = column_mut(&mut z, *latent);
                    for &(i, y) in observed {
                        col[i] = if y { 0.5 } else { -0.5 };
                    }
                    if !observed.is_empty() {
                        let rate = observed.iter().filter(|o| o.1).count() as f64 / observed.len() as f64;
                        alpha[*latent] = std_normal_quantile(clamp(rate));
                    }
                }
                ColumnModel::Categorical { first, n_levels, observed, missing } => {
                    let cells = observed.iter().copied().chain(missing.iter().copied().zip(self.levels[j].iter().copied()));
                    for (i, level) in cells {
                        for c in 0..*n_levels {
                            z[(i, first + c)] = if c == level { 0.5 } else { -0.5 };
                        }
                    }
                }
            }
        }
        for (r, mask) in &self.indicators {
            let col = column_mut(&mut z, *r);
            for (i, &m) in mask.iter().enumerate() {
                col[i] = if m { 0.5 } else { -0.5 };
            }
            let rate = mask.iter().filter(|&&m| m).count() as f64 / n.max(1) as f64;
            alpha[*r] = std_normal_quantile(clamp(rate));
        }
        (z, alpha)
    }

    /// Resamples every latent coordinate given the factor parameters, under
    /// which latent `(i, j)` is `N((α_j + λ_j·η_i)/s_j, σ_j²/s_j²)` with
    /// `s_j² = Ω_jj`.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R, state: &FactorState, z: &mut DMatrix<f64>) -> Result<()> {
        self.update_with(rng, &FactorMoments::new(state), z)
    }

    /// One scan over every latent coordinate, each drawn from its full
    /// conditional under `m` restricted to its feasible set.
    pub fn update_with<R: Rng + ?Sized, M: LatentMoments>(&mut self, rng: &mut R, m: &M, z: &mut DMatrix<f64>) -> Result<()> {
        for (j, model) in self.columns.iter().enumerate() {
            match model {
                ColumnModel::Fixed { latent, missing, .. } => draw_free(rng, z, *latent, missing, m),
                ColumnModel::Binned { latent, binned, missing } => {
                    binned.update(rng, z, *latent, m)?;
                    draw_free(rng, z, *latent, missing, m);
                }
                ColumnModel::Binary { latent, observed, missing } => {
                    for &(i, y) in observed {
                        z[(i, *latent)] = sample_truncated_normal(rng, m.moments(z, i, *latent), TruncationInterval::sign(y));
                    }
                    draw_free(rng, z, *latent, missing, m);
                }
                ColumnModel::Categorical { first, n_levels, observed, missing } => {
                    for &(i, level) in observed {
                        for c in 0..*n_levels {
                            let iv = TruncationInterval::sign(c == level);
                            z[(i, first + c)] = sample_truncated_normal(rng, m.moments(z, i, first + c), iv);
                        }
                    }
                    for (k, &i) in missing.iter().enumerate() {
                        let level = if m.independent() {
                            // Block draw: level first, then the orthant.
                            let cell: Vec<ConditionalMoments> = (0..*n_levels).map(|c| m.moments(z, i, first + c)).collect();
                            let level = sample_level(rng, &cell);
                            for (c, mc) in cell.iter().enumerate() {
                                z[(i, first + c)] = sample_truncated_normal(rng, *mc, TruncationInterval::sign(c == level));
                            }
                            level
                        } else {
                            draw_level_block(rng, z, i, *first, *n_levels, m).unwrap_or(self.levels[j][k])
                        };
                        self.levels[j][k] = level;
                    }
                }
            }
        }
        for (r, mask) in &self.indicators {
            for (i, &miss) in mask.iter().enumerate() {
                z[(i, *r)] = sample_truncated_normal(rng, m.moments(z, i, *r), TruncationInterval::sign(miss));
            }
        }
        Ok(())
    }

    /// Per-column intermediate levels of the current latents (hybrid mode
    /// only; empty for other columns).
    pub fn marginal_levels(&self, z: &DMatrix<f64>) -> Vec<Vec<(f64, f64)>> {
        self.columns
            .iter()
            .map(|m| match m {
                ColumnModel::Binned { latent, binned, .. } if binned.ordered => {
                    estimate_levels(&binned.bins, &binned.z_obs(column(z, *latent)))
                }
                _ => Vec::new(),
            })
            .collect()
    }

    /// Values that complete the missing cells of each column: standardized
    /// latents for numeric and binary columns, level indices for
    /// categorical ones, in missing-row order.
    pub fn missing_values(&self, z: &DMatrix<f64>) -> Vec<Vec<f64>> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, m)| match m {
                ColumnModel::Fixed { latent, missing, .. }
                | ColumnModel::Binned { latent, missing, .. }
                | ColumnModel::Binary { latent, missing, .. } => {
                    let col = column(z, *latent);
                    missing.iter().map(|&i| col[i]).collect()
                }
                ColumnModel::Categorical { .. } => self.levels[j].iter().map(|&c| c as f64).collect(),
            })
            .collect()
    }

    /// Bins of the observed entries of column `j`, when binned.
    pub fn binned(&self, j: usize) -> Option<(&BinnedColumn, &[usize])> {
        match &self.columns[j] {
            ColumnModel::Binned { binned, .. } => Some((&binned.bins, &binned.rows)),
            _ => None,
        }
    }

    /// Whether column `j` uses the hybrid ordering restrictions.
    pub fn is_ordered(&self, j: usize) -> bool {
        matches!(&self.columns[j], ColumnModel::Binned { binned, .. } if binned.ordered)
    }

    /// Static interval of every latent coordinate, indexed `[latent][row]`,
    /// for the modes whose restrictions do not depend on other latents
    /// (quantile and full-marginal modes without categorical columns).
    /// Fixed latents get a degenerate interval marker of `(v, v]`, returned
    /// as `None`.
    pub fn static_intervals(&self) -> Result<Vec<Vec<Option<TruncationInterval>>>> {
        let d = self.layout.dim();
        let mut out = vec![vec![Some(TruncationInterval::unbounded()); self.n]; d];
        for model in &self.columns {
            match model {
                ColumnModel::Fixed { latent, observed, .. } => {
                    for &(i, _) in observed {
                        out[*latent][i] = None;
                    }
                }
                ColumnModel::Binned { latent, binned, .. } => {
                    if binned.ordered {
                        return Err(Error::Contract("hybrid restrictions depend on other latents".into()));
                    }
                    for (entry, &i) in binned.rows.iter().enumerate() {
                        out[*latent][i] = Some(eql_bounds(&binned.bins, entry));
                    }
                }
                ColumnModel::Binary { latent, observed, .. } => {
                    for &(i, y) in observed {
                        out[*latent][i] = Some(TruncationInterval::sign(y));
                    }
                }
                ColumnModel::Categorical { .. } => {
                    return Err(Error::Contract("categorical restrictions are not static".into()));
                }
            }
        }
        for (r, mask) in &self.indicators {
            for (i, &m) in mask.iter().enumerate() {
                out[*r][i] = Some(TruncationInterval::sign(m));
            }
        }
        Ok(out)
    }
}

/// Predictive level of a missing categorical cell: level `c` has weight
/// `P(z_c > 0) ∏_{c' ≠ c} P(z_c' < 0)`.
pub fn categorical_probabilities(cell: &[ConditionalMoments]) -> Vec<f64> {
    let log_pos: Vec<f64> = cell.iter().map(|m| std_normal_cdf(m.mu / m.sd()).ln()).collect();
    let log_neg: Vec<f64> = cell.iter().map(|m| std_normal_cdf(-m.mu / m.sd()).ln()).collect();
    let total_neg: f64 = log_neg.iter().sum();
    let logw: Vec<f64> = (0..cell.len()).map(|c| total_neg - log_neg[c] + log_pos[c]).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|x| x / sum).collect()
}

fn sample_level<R: Rng + ?Sized>(rng: &mut R, cell: &[ConditionalMoments]) -> usize {
    let p = categorical_probabilities(cell);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &pc) in p.iter().enumerate() {
        acc += pc;
        if u < acc {
            return c;
        }
    }
    p.len() - 1
}

fn draw_free<R: Rng + ?Sized, M: LatentMoments>(rng: &mut R, z: &mut DMatrix<f64>, j: usize, rows: &[usize], m: &M) {
    for &i in rows {
        let mc = m.moments(z, i, j);
        let w: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        z[(i, j)] = mc.mu + mc.sd() * w;
    }
}

/// Full conditional of one standardized latent given the current state.
pub trait LatentMoments {
    fn moments(&self, z: &DMatrix<f64>, i: usize, j: usize) -> ConditionalMoments;

    /// Whether the coordinates of a row are conditionally independent, so
    /// that moments do not depend on the rest of `z`.
    fn independent(&self) -> bool;

    /// Joint conditional mean and covariance of coordinates
    /// `first..first + len` of row `i`.
    fn block(&self, _z: &DMatrix<f64>, _i: usize, _first: usize, _len: usize) -> Option<(DVector<f64>, DMatrix<f64>)> {
        None
    }
}

/// Proposals tried before a missing categorical cell keeps its state.
pub const MAX_LEVEL_PROPOSALS: usize = 10_000;

/// Exact draw of the level latents of a missing categorical cell from
/// their joint conditional restricted to "exactly one positive", by
/// rejection. Returns the new level, or `None` (latents untouched) when
/// the block is unavailable or every proposal was rejected.
fn draw_level_block<R: Rng + ?Sized, M: LatentMoments>(
    rng: &mut R,
    z: &mut DMatrix<f64>,
    i: usize,
    first: usize,
    len: usize,
    m: &M,
) -> Option<usize> {
    let (mean, cov) = m.block(z, i, first, len)?;
    let l = cov.cholesky()?.unpack();
    for _ in 0..MAX_LEVEL_PROPOSALS {
        let w = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let x = &mean + &l * w;
        let mut positive = (0..len).filter(|&c| x[c] > 0.0);
        if let (Some(c), None) = (positive.next(), positive.next()) {
            for (k, v) in x.iter().enumerate() {
                z[(i, first + k)] = *v;
            }
            return Some(c);
        }
    }
    None
}

/// Moments given the factors: `N((α_j + λ_j·η_i)/s_j, σ_j²/s_j²)`.
#[derive(Debug, Clone)]
pub struct FactorMoments {
    mean: DMatrix<f64>,
    var: Vec<f64>,
}

impl FactorMoments {
    pub fn new(state: &FactorState) -> Self {
        let scales = state.scales();
        let mut mean = &state.factors * state.loadings.transpose();
        for (j, mut col) in mean.column_iter_mut().enumerate() {
            col.add_scalar_mut(state.alpha[j]);
            col /= scales[j];
        }
        let var = (0..scales.len()).map(|j| state.sigma2[j] / (scales[j] * scales[j])).collect();
        Self { mean, var }
    }
}

impl LatentMoments for FactorMoments {
    fn moments(&self, _z: &DMatrix<f64>, i: usize, j: usize) -> ConditionalMoments {
        ConditionalMoments::new(self.mean[(i, j)], self.var[j])
    }

    fn independent(&self) -> bool {
        true
    }
}

pub(crate) fn column(z: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = z.nrows();
    &z.as_slice()[j * n..(j + 1) * n]
}

pub(crate) fn column_mut(z: &mut DMatrix<f64>, j: usize) -> &mut [f64] {
    let n = z.nrows();
    &mut z.as_mut_slice()[j * n..(j + 1) * n]
}
