//! The subcommands. Each reads its inputs, runs one stage and writes its
//! artifacts, every file starting with the run header.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use qcopula::io::{read_dataset_file, read_json, read_schema, write_dataset_file, write_draws, write_json, write_marginals, write_schema};
use qcopula::mi::{fit_ols, fit_quantile_regression, make_imputations, rubin_combine, PooledEstimate, RegressionFit, BOOTSTRAP_RESAMPLES};
use qcopula::oracle::{pair_table, polychoric_mle, OracleVariable};
use qcopula::sampler::LatentLayout;
use qcopula::sim::{concentration_data, fitter_input};
use qcopula::types::empirical_quantile;
use qcopula::{run_chain, ColumnMargin, ColumnSchema, Dataset, Error, Marginal, MissingnessMode, PosteriorOutput};

use crate::config::{Command, RunConfig};

pub const DATA_FILE: &str = "data.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const DRAWS_FILE: &str = "draws.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const POSTERIOR_FILE: &str = "posterior.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const POOLED_FILE: &str = "pooled.json";
pub const DIAGNOSE_FILE: &str = "diagnose.json";

/// Runs the configured command. Errors name the failing stage.
pub fn execute(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Fit => fit(cfg),
        Command::Impute => impute(cfg),
        Command::Analyze => analyze(cfg),
        Command::Diagnose => diagnose(cfg),
    }
    .with_context(|| format!("{} failed", cfg.command.name()))
}

/// Everything the generator knows about a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    /// Latent labels: study columns then their indicators.
    pub labels: Vec<String>,
    pub correlation: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub marginals: Vec<Marginal>,
    /// Complete values of every study column.
    pub complete: Vec<Vec<f64>>,
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let sim = concentration_data(cfg.seed, 0, cfg.n, cfg.p, cfg.missing).context("generating data")?;
    let (data, mut margins, _) = fitter_input(cfg.granularity, &sim).context("building auxiliary quantiles")?;
    for (m, truth) in margins.iter_mut().zip(&sim.truth.marginals) {
        m.known = Some(*truth);
    }
    let header = cfg.header();
    let out = &cfg.output_dir;
    write_dataset_file(&out.join(DATA_FILE), &data, Some(&header))?;
    write_schema(&out.join(SCHEMA_FILE), data.schemas(), &margins, Some(&header))?;
    let c = &sim.truth.correlation;
    let names: Vec<&str> = data.schemas().iter().map(|s| s.name.as_str()).collect();
    let truth = TruthFile {
        labels: names.iter().map(|s| s.to_string()).chain(names.iter().map(|s| format!("R[{s}]"))).collect(),
        correlation: c.row_iter().map(|r| r.iter().copied().collect()).collect(),
        alpha: sim.truth.alpha.iter().copied().collect(),
        marginals: sim.truth.marginals.clone(),
        complete: sim.truth.complete.clone(),
    };
    write_json(&out.join(TRUTH_FILE), &truth, Some(&header))?;
    Ok(())
}

fn load_inputs(data: &Path, schema: &Path) -> Result<(Dataset, Vec<ColumnMargin>)> {
    let (schemas, margins) = read_schema(schema).with_context(|| format!("reading schema {}", schema.display()))?;
    let data = read_dataset_file(data, &schemas).with_context(|| format!("reading data {}", data.display()))?;
    Ok((data, margins))
}

/// Posterior means and central 95% intervals of the correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub labels: Vec<String>,
    pub retained: usize,
    pub entries: Vec<SummaryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub a: String,
    pub b: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn summarize(output: &PosteriorOutput) -> FitSummary {
    let labels = output.layout.labels().to_vec();
    let d = labels.len();
    let mut entries = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            let mut xs = output.correlation_trace(a, b);
            let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            xs.sort_by(f64::total_cmp);
            let (lower, upper) =
                if xs.is_empty() { (f64::NAN, f64::NAN) } else { (empirical_quantile(&xs, 0.025), empirical_quantile(&xs, 0.975)) };
            entries.push(SummaryEntry { a: labels[a].clone(), b: labels[b].clone(), mean, lower, upper });
        }
    }
    FitSummary { labels, retained: output.draws.len(), entries }
}

fn fit(cfg: &RunConfig) -> Result<()> {
    let (data, margins) = load_inputs(required(&cfg.data_path)?, required(&cfg.schema_path)?)?;
    let output = run_chain(&data, &margins, &cfg.chain()).context("sampling")?;
    let header = cfg.header();
    let out = &cfg.output_dir;
    let file = |name: &str| -> Result<fs::File> { Ok(fs::File::create(out.join(name))?) };
    write_draws(std::io::BufWriter::new(file(DRAWS_FILE)?), &output, Some(&header))?;
    write_marginals(std::io::BufWriter::new(file(MARGINALS_FILE)?), &output, Some(&header))?;
    write_json(&out.join(POSTERIOR_FILE), &output, Some(&header))?;
    write_json(&out.join(SUMMARY_FILE), &summarize(&output), Some(&header))?;
    write_dataset_file(&out.join(DATA_FILE), &data, Some(&header))?;
    write_schema(&out.join(SCHEMA_FILE), data.schemas(), &margins, Some(&header))?;
    Ok(())
}

fn required(p: &Option<PathBuf>) -> Result<&Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing path"))
}

fn impute(cfg: &RunConfig) -> Result<()> {
    let dir = required(&cfg.draws_dir)?;
    let (data, margins) = load_inputs(&dir.join(DATA_FILE), &dir.join(SCHEMA_FILE))?;
    let output: PosteriorOutput = read_json(&dir.join(POSTERIOR_FILE))
        .with_context(|| format!("reading {}", dir.join(POSTERIOR_FILE).display()))?;
    let completed = match make_imputations(&data, &output, cfg.m, cfg.spacing) {
        Err(e @ Error::InsufficientDraws { .. }) => {
            let thin = output.config.thin;
            bail!(
                "{e}\nhint: rerun `fit` with iters - burnin >= m * spacing * thin = {} or lower --m / --spacing",
                cfg.m * cfg.spacing * thin
            );
        }
        other => other.context("imputing")?,
    };
    let header = cfg.header();
    let out = &cfg.output_dir;
    for (k, c) in completed.iter().enumerate() {
        write_dataset_file(&out.join(format!("imp_{}.csv", k + 1)), &c.data, Some(&header))?;
    }
    if !same_dir(out, dir) {
        write_schema(&out.join(SCHEMA_FILE), data.schemas(), &margins, Some(&header))?;
    }
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Completed datasets `imp_<k>.csv` of a directory, in order of `k`.
pub fn imputation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let k = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("imp_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|k| k.parse::<usize>().ok());
        if let Some(k) = k {
            found.push((k, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Pooled inference for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledModel {
    /// `None` for least squares.
    pub tau: Option<f64>,
    pub coefficients: Vec<PooledCoefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCoefficient {
    pub name: String,
    #[serde(flatten)]
    pub pooled: PooledEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub response: String,
    pub covariates: Vec<String>,
    pub imputations: usize,
    pub models: Vec<PooledModel>,
}

fn pool(fits: &[RegressionFit], tau: Option<f64>) -> Result<PooledModel> {
    let names = &fits[0].names;
    let coefficients = (0..names.len())
        .map(|c| {
            let est: Vec<f64> = fits.iter().map(|f| f.coefficients[c]).collect();
            let var: Vec<f64> = fits.iter().map(|f| f.variances[c]).collect();
            Ok(PooledCoefficient { name: names[c].clone(), pooled: rubin_combine(&est, &var)? })
        })
        .collect::<Result<_>>()?;
    Ok(PooledModel { tau, coefficients })
}

fn analyze(cfg: &RunConfig) -> Result<()> {
    let dir = required(&cfg.imputations_dir)?;
    let schema_path = cfg.schema_path.clone().unwrap_or_else(|| dir.join(SCHEMA_FILE));
    let (schemas, _) = read_schema(&schema_path).with_context(|| format!("reading schema {}", schema_path.display()))?;
    let files = imputation_files(dir)?;
    if files.is_empty() {
        bail!("no imp_<k>.csv files in {}", dir.display());
    }
    let sets: Vec<Dataset> = files
        .iter()
        .map(|f| read_dataset_file(f, &schemas).with_context(|| format!("reading {}", f.display())))
        .collect::<Result<_>>()?;
    let lookup = |name: &str| -> Result<usize> {
        schemas.iter().position(|s| s.name == name).ok_or_else(|| anyhow!("unknown column `{name}`"))
    };
    let response = cfg.response.as_deref().ok_or_else(|| anyhow!("response: not set"))?;
    let y = lookup(response)?;
    let covariates: Vec<usize> = if cfg.covariates.is_empty() {
        (0..schemas.len()).filter(|&j| j != y).collect()
    } else {
        cfg.covariates.iter().map(|c| lookup(c)).collect::<Result<_>>()?
    };
    let mut models = Vec::new();
    if cfg.tau.is_empty() {
        let fits: Vec<RegressionFit> =
            sets.iter().map(|d| fit_ols(d, y, &covariates, false)).collect::<qcopula::Result<_>>()?;
        models.push(pool(&fits, None)?);
    }
    for &tau in &cfg.tau {
        let fits: Vec<RegressionFit> = sets
            .iter()
            .enumerate()
            .map(|(k, d)| fit_quantile_regression(d, tau, y, &covariates, false, BOOTSTRAP_RESAMPLES, cfg.seed.wrapping_add(k as u64)))
            .collect::<qcopula::Result<_>>()
            .with_context(|| format!("quantile regression at tau = {tau}"))?;
        models.push(pool(&fits, Some(tau))?);
    }
    let report = PooledReport {
        response: response.to_string(),
        covariates: covariates.iter().map(|&j| schemas[j].name.clone()).collect(),
        imputations: sets.len(),
        models,
    };
    write_json(&cfg.output_dir.join(POOLED_FILE), &report, Some(&cfg.header()))?;
    Ok(())
}

/// Oracle estimate for one pair of discretized variables, with the
/// posterior mean of the same correlation when a fit is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub a: String,
    pub b: String,
    pub oracle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference: Option<f64>,
}

/// Pairs whose observed cell tables identify the correlation. Indicators
/// are always observed and a column's own indicator covers its missing
/// rows, but two variables selected by a modeled missingness indicator
/// are only seen on a biased subsample, so such pairs are skipped.
fn oracle_pairs(schemas: &[ColumnSchema], margins: &[ColumnMargin]) -> Vec<(OracleVariable, OracleVariable)> {
    let binned: Vec<usize> = (0..schemas.len()).filter(|&j| margins[j].aux.is_some() && schemas[j].kind.is_numeric()).collect();
    let indicators: Vec<usize> =
        (0..schemas.len()).filter(|&j| schemas[j].missingness_mode == MissingnessMode::Modeled).collect();
    let mcar = |j: usize| schemas[j].missingness_mode == MissingnessMode::Mcar;
    let mut pairs = Vec::new();
    for (x, &a) in binned.iter().enumerate() {
        for &b in &binned[x + 1..] {
            if mcar(a) && mcar(b) {
                pairs.push((OracleVariable::Binned(a), OracleVariable::Binned(b)));
            }
        }
        for &r in &indicators {
            if r == a || mcar(a) {
                pairs.push((OracleVariable::Binned(a), OracleVariable::Indicator(r)));
            }
        }
    }
    for (x, &a) in indicators.iter().enumerate() {
        for &b in &indicators[x + 1..] {
            pairs.push((OracleVariable::Indicator(a), OracleVariable::Indicator(b)));
        }
    }
    pairs
}

fn latent_index(layout: &LatentLayout, v: OracleVariable) -> Option<usize> {
    match v {
        OracleVariable::Binned(j) => Some(layout.study(j).start),
        OracleVariable::Indicator(j) => layout.indicator(j),
    }
}

fn variable_label(schemas: &[ColumnSchema], v: OracleVariable) -> String {
    match v {
        OracleVariable::Binned(j) => schemas[j].name.clone(),
        OracleVariable::Indicator(j) => format!("R[{}]", schemas[j].name),
    }
}

pub fn compare_with_oracle(
    data: &Dataset,
    margins: &[ColumnMargin],
    posterior: Option<&PosteriorOutput>,
) -> Vec<OracleComparison> {
    let aux: Vec<_> = margins.iter().map(|m| m.aux.clone()).collect();
    let mean = posterior.map(|p| (p.mean_correlation(), &p.layout));
    oracle_pairs(data.schemas(), margins)
        .into_iter()
        .map(|(a, b)| {
            let fit = pair_table(data, &aux, a, b).and_then(|t| polychoric_mle(&t));
            let post = mean.as_ref().and_then(|(m, layout)| Some(m[(latent_index(layout, a)?, latent_index(layout, b)?)]));
            let oracle = fit.as_ref().ok().copied();
            OracleComparison {
                a: variable_label(data.schemas(), a),
                b: variable_label(data.schemas(), b),
                oracle,
                oracle_error: fit.err().map(|e| e.to_string()),
                posterior: post,
                difference: oracle.zip(post).map(|(o, p)| p - o),
            }
        })
        .collect()
}

fn diagnose(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.draws_dir.as_deref();
    let data_path = cfg.data_path.clone().or_else(|| dir.map(|d| d.join(DATA_FILE))).ok_or_else(|| anyhow!("data_path: not set"))?;
    let schema_path =
        cfg.schema_path.clone().or_else(|| dir.map(|d| d.join(SCHEMA_FILE))).ok_or_else(|| anyhow!("schema_path: not set"))?;
    let (data, margins) = load_inputs(&data_path, &schema_path)?;
    let posterior: Option<PosteriorOutput> = dir
        .map(|d| read_json(&d.join(POSTERIOR_FILE)).with_context(|| format!("reading {}", d.join(POSTERIOR_FILE).display())))
        .transpose()?;
    let rows = compare_with_oracle(&data, &margins, posterior.as_ref());
    write_json(&cfg.output_dir.join(DIAGNOSE_FILE), &rows, Some(&cfg.header()))?;
    Ok(())
}
