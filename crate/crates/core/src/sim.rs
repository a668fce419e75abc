//! Synthetic data generators and experiment runners: posterior
//! concentration across auxiliary-information granularities, marginal
//! recovery, and repeated-sampling coverage of pooled regression
//! inferences.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::correlation_from_covariance;
use crate::kernels::{std_normal_cdf, std_normal_quantile};
use crate::mi::{fit_ols, make_imputations, rubin_combine};
use crate::sampler::{run_chain, ChainConfig, ColumnMargin, LikelihoodMode, PosteriorOutput};
use crate::types::{
    empirical_quantile, AuxiliaryQuantileSet, Cdf, ColumnKind, ColumnSchema, Dataset, Marginal, MissingnessMode,
};

/// Margin of study column `j` in the concentration study: gamma, noncentral
/// t and beta in turn.
pub fn cycle_marginal(j: usize) -> Marginal {
    match j % 3 {
        0 => Marginal::Gamma { shape: 1.0, scale: 1.0 },
        1 => Marginal::NoncentralT { df: 5.0, ncp: 2.0 },
        _ => Marginal::Beta { a: 1.0, b: 2.0 },
    }
}

/// Random correlation: an inverse-Wishart draw with `dim + 2` degrees of
/// freedom and identity scale, rescaled to unit diagonal.
pub fn gen_correlation<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let df = (dim + 2) as f64;
    // Bartlett factor of a Wishart(df, I) draw.
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        a[(i, i)] = ChiSquared::new(df - i as f64).expect("positive df").sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let w = &a * a.transpose();
    let sigma = w.cholesky().expect("Wishart draws are positive definite").inverse();
    let c = correlation_from_covariance(&sigma);
    // The inverse is only symmetric up to rounding.
    let mut c = 0.5 * (&c + c.transpose());
    c.fill_diagonal(1.0);
    c
}

/// Everything the generator knows that the fitter must not see.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub correlation: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub marginals: Vec<Marginal>,
    /// Complete study values, including the cells masked in the dataset.
    pub complete: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub truth: GroundTruth,
}

/// Draws `n` rows of `z ~ N((0, α_r), C₀)` with `dim(C₀) = 2p`, maps the
/// first `p` coordinates through the marginals and masks `y_ij` whenever
/// its indicator latent is positive.
pub fn gen_copula_data<R: Rng + ?Sized>(
    rng: &mut R,
    c0: &DMatrix<f64>,
    marginals: &[Marginal],
    alpha_r: &[f64],
    n: usize,
) -> Result<SimulatedData> {
    let p = marginals.len();
    if c0.nrows() != 2 * p || alpha_r.len() != p {
        return Err(Error::Contract("gen_copula_data: expected a 2p × 2p correlation and p intercepts".into()));
    }
    let l = c0.clone().cholesky().ok_or(Error::SingularSubmatrix { condition: f64::INFINITY })?.unpack();
    let mut alpha = DVector::zeros(2 * p);
    alpha.rows_mut(p, p).copy_from_slice(alpha_r);
    let mut complete = vec![Vec::with_capacity(n); p];
    let mut columns = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let w = DVector::from_fn(2 * p, |_, _| StandardNormal.sample(rng));
        let z = &alpha + &l * w;
        for j in 0..p {
            let y = marginals[j].from_latent(z[j]);
            complete[j].push(y);
            columns[j].push(if z[p + j] > 0.0 { None } else { Some(y) });
        }
    }
    let schemas = (0..p).map(|j| ColumnSchema::continuous(format!("y{}", j + 1), MissingnessMode::Modeled)).collect();
    Ok(SimulatedData {
        data: Dataset::new(schemas, columns)?,
        truth: GroundTruth { correlation: c0.clone(), alpha, marginals: marginals.to_vec(), complete },
    })
}

pub const AN_INTERCEPT: f64 = -0.5;
pub const AN_SLOPE: f64 = -1.3;

/// Missingness mask with `P(missing) = Φ(intercept + slope · ỹ)`, `ỹ` the
/// standardized values.
pub fn apply_an_missingness<R: Rng + ?Sized>(rng: &mut R, values: &[f64], intercept: f64, slope: f64) -> Vec<bool> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    values
        .iter()
        .map(|&v| {
            let u: f64 = rng.random();
            u < std_normal_cdf(intercept + slope * (v - mean) / sd)
        })
        .collect()
}

/// Amount of auxiliary marginal information given to the fitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Known marginal CDFs.
    Full,
    /// Median and bounds.
    EqlM,
    /// Deciles and bounds.
    EqlDeciles,
    /// Every fourth percentile and bounds.
    EqlQuarterPercentiles,
    /// Median and bounds plus intermediate points.
    EhqlM,
    /// Indicators dropped and empirical deciles of the observed values used
    /// as quantiles: the missing-at-random comparator.
    MarBaseline,
}

impl Granularity {
    pub const ALL: [Granularity; 6] = [
        Granularity::Full,
        Granularity::EqlM,
        Granularity::EqlDeciles,
        Granularity::EqlQuarterPercentiles,
        Granularity::EhqlM,
        Granularity::MarBaseline,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Granularity::Full => "full",
            Granularity::EqlM => "eql-m",
            Granularity::EqlDeciles => "eql-deciles",
            Granularity::EqlQuarterPercentiles => "eql-quarter-percentiles",
            Granularity::EhqlM => "ehql-m",
            Granularity::MarBaseline => "mar-baseline",
        }
    }

    fn taus(&self) -> Vec<f64> {
        match self {
            Granularity::EqlM | Granularity::EhqlM => vec![0.5],
            Granularity::EqlDeciles | Granularity::MarBaseline => (1..10).map(|k| k as f64 / 10.0).collect(),
            Granularity::EqlQuarterPercentiles => (1..25).map(|k| k as f64 * 0.04).collect(),
            Granularity::Full => Vec::new(),
        }
    }

    pub fn mode(&self) -> LikelihoodMode {
        match self {
            Granularity::Full => LikelihoodMode::FullMarginal,
            Granularity::EqlM | Granularity::EqlDeciles | Granularity::EqlQuarterPercentiles => LikelihoodMode::Eql,
            Granularity::EhqlM | Granularity::MarBaseline => LikelihoodMode::Ehql,
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown granularity {s:?}")))
    }
}

/// Known quantiles of `marginal` at `taus`. Unbounded supports are cut at
/// the `1e-9` tail quantiles, widened to cover every observed value.
pub fn marginal_aux(schema: &ColumnSchema, marginal: &Marginal, taus: &[f64], observed: &[f64]) -> Result<AuxiliaryQuantileSet> {
    let (lo, hi) = marginal.support();
    let obs_min = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let obs_max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower = if lo.is_finite() { lo } else { marginal.quantile(1e-9).min(obs_min) };
    let upper = if hi.is_finite() { hi } else { marginal.quantile(1.0 - 1e-9).max(obs_max) };
    AuxiliaryQuantileSet::from_quantile_fn(schema, taus, lower, upper, |t| marginal.quantile(t))
}

/// Dataset, margins and mode presented to the fitter at a granularity.
pub fn fitter_input(granularity: Granularity, sim: &SimulatedData) -> Result<(Dataset, Vec<ColumnMargin>, LikelihoodMode)> {
    let data = &sim.data;
    let taus = granularity.taus();
    let mut margins = Vec::with_capacity(data.n_cols());
    for (j, schema) in data.schemas().iter().enumerate() {
        let observed = data.observed_values(j);
        let m = &sim.truth.marginals[j];
        margins.push(match granularity {
            Granularity::Full => ColumnMargin::known(*m),
            Granularity::MarBaseline => ColumnMargin::aux(AuxiliaryQuantileSet::empirical(schema, &observed, &taus)?),
            _ => ColumnMargin::aux(marginal_aux(schema, m, &taus, &observed)?),
        });
    }
    let data = if granularity == Granularity::MarBaseline {
        let schemas = data
            .schemas()
            .iter()
            .map(|s| ColumnSchema { missingness_mode: MissingnessMode::Mcar, ..s.clone() })
            .collect();
        data.with_schemas(schemas)?
    } else {
        data.clone()
    };
    Ok((data, margins, granularity.mode()))
}

/// One long-format report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub metric: String,
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
}

impl ExperimentReport {
    pub fn push(&mut self, metric: &str, method: &str, n: usize, p: usize, rep: usize, value: f64) {
        self.records.push(Record { metric: metric.into(), method: method.into(), n, p, rep, value });
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        self.records.extend(other.records);
    }

    pub fn values(&self, metric: &str, method: &str, n: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.metric == metric && r.method == method && r.n == n)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, metric: &str, method: &str, n: usize) -> Option<f64> {
        let v = self.values(metric, method, n);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Mean of every (metric, method, n, p) group.
    pub fn summary(&self) -> serde_json::Value {
        let mut groups: BTreeMap<(String, String, usize, usize), (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = groups.entry((r.metric.clone(), r.method.clone(), r.n, r.p)).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        serde_json::Value::Array(
            groups
                .into_iter()
                .map(|((metric, method, n, p), (sum, count))| {
                    serde_json::json!({
                        "metric": metric, "method": method, "n": n, "p": p,
                        "mean": sum / count as f64, "count": count,
                    })
                })
                .collect(),
        )
    }
}

/// Accuracy of the correlation draws against the truth over a block of
/// latent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScore {
    /// Share of entries whose 95% interval for `ρ₀ − ρ_θ` contains zero.
    pub coverage: f64,
    pub mean_width: f64,
    /// Frobenius norm of posterior mean minus truth over the block.
    pub frobenius: f64,
    pub median_abs_error: f64,
}

/// Scores unique off-diagonal entries of `coords` (indices into both the
/// fitted layout and the truth).
pub fn score_correlation(output: &PosteriorOutput, truth: &DMatrix<f64>, coords: &[(usize, usize)]) -> CorrelationScore {
    let mean = output.mean_correlation();
    let mut covered = 0usize;
    let mut width = 0.0;
    let mut frob = 0.0;
    let mut errors = Vec::new();
    for (a, &(u_fit, u_true)) in coords.iter().enumerate() {
        for &(v_fit, v_true) in &coords[a + 1..] {
            let rho0 = truth[(u_true, v_true)];
            let mut diffs: Vec<f64> = output.draws.iter().map(|d| rho0 - d.correlation[(u_fit, v_fit)]).collect();
            diffs.sort_by(f64::total_cmp);
            let (lo, hi) = if diffs.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (empirical_quantile(&diffs, 0.025), empirical_quantile(&diffs, 0.975))
            };
            if lo <= 0.0 && hi >= 0.0 {
                covered += 1;
            }
            width += hi - lo;
            let e = mean[(u_fit, v_fit)] - rho0;
            frob += 2.0 * e * e;
            errors.push(e.abs());
        }
    }
    let m = errors.len().max(1) as f64;
    errors.sort_by(f64::total_cmp);
    CorrelationScore {
        coverage: covered as f64 / m,
        mean_width: width / m,
        frobenius: frob.sqrt(),
        median_abs_error: if errors.is_empty() { f64::NAN } else { empirical_quantile(&errors, 0.5) },
    }
}

/// Sup-norm errors of the recovered marginal CDF at the intermediate
/// points of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalError {
    pub column: usize,
    pub points: usize,
    /// Posterior mean of the estimated levels against the true CDF.
    pub posterior: f64,
    /// Empirical CDF of the observed values against the true CDF.
    pub ecdf: f64,
}

/// Compares posterior-mean levels at intermediate points with the truth,
/// and the observed-data ECDF at the same points.
pub fn marginal_errors(output: &PosteriorOutput, data: &Dataset, truth: &GroundTruth) -> Vec<MarginalError> {
    (0..data.n_cols())
        .filter_map(|j| {
            let mut sums: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
            for d in &output.draws {
                for &(v, l) in &d.levels[j] {
                    let e = sums.entry(v.to_bits()).or_insert((v, 0.0, 0));
                    e.1 += l;
                    e.2 += 1;
                }
            }
            if sums.is_empty() {
                return None;
            }
            let mut obs = data.observed_values(j);
            obs.sort_by(f64::total_cmp);
            let f = &truth.marginals[j];
            let (mut post, mut ecdf) = (0.0f64, 0.0f64);
            for &(v, sum, count) in sums.values() {
                let t = f.cdf(v);
                post = post.max((sum / count as f64 - t).abs());
                let e = obs.partition_point(|&x| x <= v) as f64 / obs.len() as f64;
                ecdf = ecdf.max((e - t).abs());
            }
            Some(MarginalError { column: j, points: sums.len(), posterior: post, ecdf })
        })
        .collect()
}

/// Settings of the concentration study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: Vec<usize>,
    pub p: usize,
    pub missing_rate: f64,
    pub granularities: Vec<Granularity>,
    pub replications: usize,
    pub seed: u64,
    pub chain: ChainConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: vec![200, 1000, 5000],
            p: 5,
            missing_rate: 0.5,
            granularities: Granularity::ALL.to_vec(),
            replications: 1,
            seed: 0,
            chain: ChainConfig { iters: 2000, burnin: 1000, record_imputations: false, ..Default::default() },
        }
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the truth and data of the concentration study for one
/// replication.
pub fn concentration_data(seed: u64, rep: usize, n: usize, p: usize, missing_rate: f64) -> Result<SimulatedData> {
    let mut rng = substream(seed, rep as u64);
    let c0 = gen_correlation(&mut rng, 2 * p);
    let marginals: Vec<Marginal> = (0..p).map(cycle_marginal).collect();
    let alpha_r = vec![std_normal_quantile(missing_rate); p];
    gen_copula_data(&mut rng, &c0, &marginals, &alpha_r, n)
}

/// Fits one granularity and scores it. The study block is scored for every
/// method; the full block (with indicators) where the method models them.
pub fn fit_and_score(
    sim: &SimulatedData,
    granularity: Granularity,
    chain: &ChainConfig,
) -> Result<(PosteriorOutput, CorrelationScore, Option<CorrelationScore>)> {
    let (data, margins, mode) = fitter_input(granularity, sim)?;
    let config = ChainConfig { mode, ..chain.clone() };
    let out = run_chain(&data, &margins, &config)?;
    let p = data.n_cols();
    let study: Vec<(usize, usize)> = (0..p).map(|j| (j, j)).collect();
    let s = score_correlation(&out, &sim.truth.correlation, &study);
    let all = (out.layout.dim() == 2 * p).then(|| {
        let coords: Vec<(usize, usize)> = (0..2 * p).map(|j| (j, j)).collect();
        score_correlation(&out, &sim.truth.correlation, &coords)
    });
    Ok((out, s, all))
}

/// Concentration study: every sample size, granularity and replication,
/// run in parallel.
pub fn run_consistency_study(cfg: &SimConfig) -> Result<ExperimentReport> {
    let jobs: Vec<(usize, usize, Granularity)> = (0..cfg.replications)
        .flat_map(|rep| cfg.n.iter().flat_map(move |&n| cfg.granularities.iter().map(move |&g| (rep, n, g))))
        .collect();
    let parts: Vec<Result<ExperimentReport>> = jobs
        .par_iter()
        .map(|&(rep, n, g)| {
            let sim = concentration_data(cfg.seed, rep, n, cfg.p, cfg.missing_rate)?;
            let chain = ChainConfig { seed: cfg.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), ..cfg.chain.clone() };
            let start = Instant::now();
            let (out, study, all) = fit_and_score(&sim, g, &chain)?;
            let mut r = ExperimentReport::default();
            let m = g.label();
            r.push("runtime_s", m, n, cfg.p, rep, start.elapsed().as_secs_f64());
            r.push("coverage_study", m, n, cfg.p, rep, study.coverage);
            r.push("width_study", m, n, cfg.p, rep, study.mean_width);
            r.push("frobenius_study", m, n, cfg.p, rep, study.frobenius);
            r.push("median_abs_error_study", m, n, cfg.p, rep, study.median_abs_error);
            if let Some(all) = all {
                r.push("coverage_all", m, n, cfg.p, rep, all.coverage);
                r.push("width_all", m, n, cfg.p, rep, all.mean_width);
                r.push("frobenius_all", m, n, cfg.p, rep, all.frobenius);
                r.push("median_abs_error_all", m, n, cfg.p, rep, all.median_abs_error);
            }
            if g == Granularity::EhqlM {
                let data = fitter_input(g, &sim)?.0;
                for e in marginal_errors(&out, &data, &sim.truth) {
                    r.push(&format!("marginal_sup_error_y{}", e.column + 1), m, n, cfg.p, rep, e.posterior);
                    r.push(&format!("ecdf_sup_error_y{}", e.column + 1), m, n, cfg.p, rep, e.ecdf);
                }
            }
            Ok(r)
        })
        .collect();
    let mut report = ExperimentReport::default();
    for part in parts {
        report.extend(part?);
    }
    Ok(report)
}

/// Settings of the repeated-sampling coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    pub population: usize,
    pub n: usize,
    pub replications: usize,
    pub m: usize,
    pub spacing: usize,
    pub seed: u64,
    /// MCAR rate of the columns other than the nonignorable one.
    pub mcar_rate: f64,
    pub chain: ChainConfig,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            population: 100_000,
            n: 500,
            replications: 100,
            m: 20,
            spacing: 50,
            seed: 0,
            mcar_rate: 0.05,
            chain: ChainConfig { iters: 1500, burnin: 500, ..Default::default() },
        }
    }
}

/// Synthetic population for the coverage study: a response `y`, a skewed
/// covariate `x1` that will be nonignorably missing, a binary `x2` and a
/// count `x3`, coupled by a Gaussian copula.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub data: Dataset,
    /// Population least-squares coefficients of `y` on the covariates.
    pub coefficients: Vec<f64>,
    /// Population quantiles given to the fitter as auxiliary information.
    pub aux: Vec<Option<AuxiliaryQuantileSet>>,
}

pub const POPULATION_CORRELATION: [[f64; 4]; 4] =
    [[1.0, 0.5, 0.3, 0.3], [0.5, 1.0, 0.2, 0.2], [0.3, 0.2, 1.0, 0.1], [0.3, 0.2, 0.1, 1.0]];

pub fn population_schemas() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::continuous("y", MissingnessMode::Mcar),
        ColumnSchema::continuous("x1", MissingnessMode::Modeled),
        ColumnSchema::binary("x2", MissingnessMode::Mcar),
        ColumnSchema::count("x3", MissingnessMode::Mcar),
    ]
}

pub fn gen_population(seed: u64, size: usize) -> Result<Population> {
    let mut rng = substream(seed, u64::MAX);
    let c = DMatrix::from_fn(4, 4, |a, b| POPULATION_CORRELATION[a][b]);
    let l = c.cholesky().expect("fixed correlation is positive definite").unpack();
    let y_m = Marginal::Normal { mean: 50.0, sd: 10.0 };
    let x1_m = Marginal::Gamma { shape: 4.0, scale: 1.0 };
    let x3_m = Marginal::Gamma { shape: 2.0, scale: 1.5 };
    let mut cols = vec![Vec::with_capacity(size); 4];
    for _ in 0..size {
        let w = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let z = &l * w;
        cols[0].push(Some(y_m.from_latent(z[0])));
        cols[1].push(Some(x1_m.from_latent(z[1])));
        cols[2].push(Some(if z[2] > 0.5 { 1.0 } else { 0.0 }));
        cols[3].push(Some(x3_m.from_latent(z[3]).floor()));
    }
    let schemas = population_schemas();
    let data = Dataset::new(schemas.clone(), cols)?;
    let coefficients = fit_ols(&data, 0, &[1, 2, 3], false)?.coefficients;
    let taus = [0.1, 0.25, 0.5, 0.75, 0.9];
    let aux = schemas
        .iter()
        .enumerate()
        .map(|(j, s)| match s.kind {
            ColumnKind::Binary => Ok(None),
            _ => AuxiliaryQuantileSet::empirical(s, &data.observed_values(j), &taus).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Population { data, coefficients, aux })
}

/// One sample of the coverage study: simple random sample, nonignorable
/// missingness on `x1`, MCAR elsewhere.
pub fn coverage_sample(pop: &Population, seed: u64, rep: usize, n: usize, mcar_rate: f64) -> Result<Dataset> {
    let mut rng = substream(seed, rep as u64);
    let rows = rand::seq::index::sample(&mut rng, pop.data.n_rows(), n).into_vec();
    let sample = pop.data.select_rows(&rows);
    let x1: Vec<f64> = sample.column(1).iter().map(|v| v.expect("population is complete")).collect();
    let an = apply_an_missingness(&mut rng, &x1, AN_INTERCEPT, AN_SLOPE);
    let mut cols = sample.columns().to_vec();
    for (j, col) in cols.iter_mut().enumerate() {
        for (i, cell) in col.iter_mut().enumerate() {
            let drop = if j == 1 { an[i] } else { rng.random::<f64>() < mcar_rate };
            if drop {
                *cell = None;
            }
        }
    }
    Dataset::new(sample.schemas().to_vec(), cols)
}

/// Repeated-sampling coverage of pooled OLS coefficients under the hybrid
/// likelihood and the missing-at-random comparator.
pub fn run_coverage_study(cfg: &CoverageConfig) -> Result<ExperimentReport> {
    if cfg.replications == 0 {
        return Ok(ExperimentReport::default());
    }
    let pop = gen_population(cfg.seed, cfg.population)?;
    let parts: Vec<Result<ExperimentReport>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| coverage_replication(&pop, cfg, rep))
        .collect();
    let mut report = ExperimentReport::default();
    for part in parts {
        report.extend(part?);
    }
    Ok(report)
}

fn coverage_replication(pop: &Population, cfg: &CoverageConfig, rep: usize) -> Result<ExperimentReport> {
    let sample = coverage_sample(pop, cfg.seed, rep, cfg.n, cfg.mcar_rate)?;
    let mut report = ExperimentReport::default();
    let p = sample.n_cols();
    for method in ["ehql", "mar-baseline"] {
        let (data, margins) = if method == "ehql" {
            let margins = pop.aux.iter().map(|a| a.clone().map(ColumnMargin::aux).unwrap_or_default()).collect();
            (sample.clone(), margins)
        } else {
            let schemas = sample
                .schemas()
                .iter()
                .map(|s| ColumnSchema { missingness_mode: MissingnessMode::Mcar, ..s.clone() })
                .collect();
            let data = sample.with_schemas(schemas)?;
            let deciles: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
            let margins = data
                .schemas()
                .iter()
                .enumerate()
                .map(|(j, s)| match s.kind {
                    ColumnKind::Binary => Ok(ColumnMargin::default()),
                    _ => Ok(ColumnMargin::aux(AuxiliaryQuantileSet::empirical(s, &data.observed_values(j), &deciles)?)),
                })
                .collect::<Result<Vec<_>>>()?;
            (data, margins)
        };
        let chain = ChainConfig {
            mode: LikelihoodMode::Ehql,
            seed: cfg.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            record_imputations: true,
            ..cfg.chain.clone()
        };
        let start = Instant::now();
        let out = run_chain(&data, &margins, &chain)?;
        let imps = make_imputations(&data, &out, cfg.m, cfg.spacing)?;
        let fits = imps.iter().map(|c| fit_ols(&c.data, 0, &[1, 2, 3], false)).collect::<Result<Vec<_>>>()?;
        report.push("runtime_s", method, cfg.n, p, rep, start.elapsed().as_secs_f64());
        for (c, name) in fits[0].names.iter().enumerate() {
            let est: Vec<f64> = fits.iter().map(|f| f.coefficients[c]).collect();
            let var: Vec<f64> = fits.iter().map(|f| f.variances[c]).collect();
            let pooled = rubin_combine(&est, &var)?;
            let truth = pop.coefficients[c];
            let covered = pooled.ci.0 <= truth && truth <= pooled.ci.1;
            report.push(&format!("covered[{name}]"), method, cfg.n, p, rep, if covered { 1.0 } else { 0.0 });
            report.push(&format!("sq_error[{name}]"), method, cfg.n, p, rep, (pooled.qbar - truth).powi(2));
            report.push(&format!("width[{name}]"), method, cfg.n, p, rep, pooled.ci.1 - pooled.ci.0);
        }
    }
    Ok(report)
}
