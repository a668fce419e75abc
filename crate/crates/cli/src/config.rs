//! Command-line flags, optional config file and the validated run
//! configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qcopula::mi::{DEFAULT_M, DEFAULT_SPACING};
use qcopula::sim::Granularity;
use qcopula::{ChainConfig, LikelihoodMode};

#[derive(Debug, Parser)]
#[command(name = "qcopula", version, about = "Copula estimation and multiple imputation with auxiliary quantiles")]
pub struct Cli {
    /// JSON file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Generate a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and write posterior draws.
    Fit(FitArgs),
    /// Write completed datasets from a fit directory.
    Impute(ImputeArgs),
    /// Pool regressions over completed datasets.
    Analyze(AnalyzeArgs),
    /// Pairwise polychoric estimates for checking a fit.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Preset {
    /// Concentration study: cycled Gamma / noncentral-t / Beta margins.
    #[value(name = "concentration", alias = "sec4-1")]
    #[serde(rename = "concentration", alias = "sec4-1")]
    Concentration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Fit,
    Impute,
    Analyze,
    Diagnose,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Marginal missing rate.
    #[arg(long)]
    pub missing: Option<f64>,
    /// Auxiliary quantiles written to the schema.
    #[arg(long)]
    pub granularity: Option<Granularity>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// full, eql or ehql.
    #[arg(long)]
    pub mode: Option<LikelihoodMode>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub spacing: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the draws directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory holding imp_<k>.csv and schema.json.
    #[arg(long)]
    pub imputations: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Quantile levels; least squares when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Seed for bootstrap variances.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// A fit directory whose posterior is compared with the oracle.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings that may come from the config file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub data_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub draws_dir: Option<PathBuf>,
    pub imputations_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub mode: Option<LikelihoodMode>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub rank: Option<usize>,
    pub m: Option<usize>,
    pub spacing: Option<usize>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub missing: Option<f64>,
    pub granularity: Option<Granularity>,
    pub response: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub tau: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f),)* }
    };
}

impl Settings {
    /// Values of `self` where set, otherwise those of `base`.
    pub fn over(self, base: Settings) -> Settings {
        overlay!(self, base; data_path, schema_path, draws_dir, imputations_dir, output_dir, mode, iters,
            burnin, thin, rank, m, spacing, seed, preset, n, p, missing, granularity, response, covariates, tau)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

impl CommandArgs {
    fn split(self) -> (Command, Settings) {
        match self {
            CommandArgs::Simulate(a) => (
                Command::Simulate,
                Settings {
                    preset: a.preset,
                    n: a.n,
                    p: a.p,
                    missing: a.missing,
                    granularity: a.granularity,
                    seed: a.seed,
                    output_dir: a.out,
                    ..Default::default()
                },
            ),
            CommandArgs::Fit(a) => (
                Command::Fit,
                Settings {
                    data_path: a.data,
                    schema_path: a.schema,
                    mode: a.mode,
                    iters: a.iters,
                    burnin: a.burnin,
                    thin: a.thin,
                    rank: a.rank,
                    seed: a.seed,
                    output_dir: a.out,
                    ..Default::default()
                },
            ),
            CommandArgs::Impute(a) => (
                Command::Impute,
                Settings { draws_dir: a.draws, m: a.m, spacing: a.spacing, seed: a.seed, output_dir: a.out, ..Default::default() },
            ),
            CommandArgs::Analyze(a) => (
                Command::Analyze,
                Settings {
                    imputations_dir: a.imputations,
                    schema_path: a.schema,
                    response: a.response,
                    covariates: a.covariates,
                    tau: a.tau,
                    seed: a.seed,
                    output_dir: a.out,
                    ..Default::default()
                },
            ),
            CommandArgs::Diagnose(a) => (
                Command::Diagnose,
                Settings {
                    data_path: a.data,
                    schema_path: a.schema,
                    draws_dir: a.draws,
                    output_dir: a.out,
                    ..Default::default()
                },
            ),
        }
    }
}

/// A validated run. Every field has its final value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub data_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub draws_dir: Option<PathBuf>,
    pub imputations_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub mode: LikelihoodMode,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub rank: Option<usize>,
    pub m: usize,
    pub spacing: usize,
    pub seed: u64,
    pub preset: Preset,
    pub n: usize,
    pub p: usize,
    pub missing: f64,
    pub granularity: Granularity,
    pub response: Option<String>,
    pub covariates: Vec<String>,
    pub tau: Vec<f64>,
}

impl RunConfig {
    /// Applies defaults to `s` and checks every cross-field invariant.
    pub fn resolve(command: Command, s: Settings) -> Result<RunConfig> {
        let chain = ChainConfig::default();
        let seed = match (command, s.seed) {
            (_, Some(seed)) => seed,
            (Command::Fit | Command::Impute, None) => bail!("seed: required for `{}`", command.name()),
            (_, None) => 0,
        };
        let fallback_out = match command {
            Command::Impute => s.draws_dir.clone(),
            Command::Analyze => s.imputations_dir.clone(),
            _ => None,
        };
        let cfg = RunConfig {
            command,
            output_dir: s.output_dir.or(fallback_out).unwrap_or_else(|| PathBuf::from(".")),
            data_path: s.data_path,
            schema_path: s.schema_path,
            draws_dir: s.draws_dir,
            imputations_dir: s.imputations_dir,
            mode: s.mode.unwrap_or(chain.mode),
            iters: s.iters.unwrap_or(chain.iters),
            burnin: s.burnin.unwrap_or(chain.burnin),
            thin: s.thin.unwrap_or(chain.thin),
            rank: s.rank,
            m: s.m.unwrap_or(DEFAULT_M),
            spacing: s.spacing.unwrap_or(DEFAULT_SPACING),
            seed,
            preset: s.preset.unwrap_or(Preset::Concentration),
            n: s.n.unwrap_or(1000),
            p: s.p.unwrap_or(5),
            missing: s.missing.unwrap_or(0.5),
            granularity: s.granularity.unwrap_or(Granularity::EhqlM),
            response: s.response,
            covariates: s.covariates.unwrap_or_default(),
            tau: s.tau.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            bail!("iters: must be at least 1");
        }
        if self.burnin >= self.iters {
            bail!("burnin: must be below iters ({} >= {})", self.burnin, self.iters);
        }
        if self.thin == 0 {
            bail!("thin: must be at least 1");
        }
        if self.m == 0 {
            bail!("m: must be at least 1");
        }
        if self.spacing == 0 {
            bail!("spacing: must be at least 1");
        }
        if self.rank == Some(0) {
            bail!("rank: must be at least 1");
        }
        let need = |field: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(anyhow::anyhow!("{field}: required for `{}`", self.command.name()))
            }
        };
        match self.command {
            Command::Simulate => {
                if self.n == 0 {
                    bail!("n: must be at least 1");
                }
                if self.p == 0 {
                    bail!("p: must be at least 1");
                }
                if !(self.missing > 0.0 && self.missing < 1.0) {
                    bail!("missing: must lie strictly between 0 and 1, got {}", self.missing);
                }
            }
            Command::Fit => {
                need("data_path", self.data_path.is_some())?;
                need("schema_path", self.schema_path.is_some())?;
            }
            Command::Impute => need("draws_dir", self.draws_dir.is_some())?,
            Command::Analyze => {
                need("imputations_dir", self.imputations_dir.is_some())?;
                need("response", self.response.is_some())?;
                if let Some(t) = self.tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                    bail!("tau: levels must lie strictly between 0 and 1, got {t}");
                }
            }
            Command::Diagnose => {
                if self.draws_dir.is_none() {
                    need("data_path", self.data_path.is_some())?;
                    need("schema_path", self.schema_path.is_some())?;
                }
            }
        }
        Ok(())
    }

    /// Sampler settings of a `fit` run.
    pub fn chain(&self) -> ChainConfig {
        let mut chain = ChainConfig {
            mode: self.mode,
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            ..Default::default()
        };
        chain.hyper.rank = self.rank;
        chain
    }

    /// Hash of the settings that determine the outputs. Paths are left out
    /// so the same run on copied inputs produces identical files.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        for p in [&mut keyed.data_path, &mut keyed.schema_path, &mut keyed.draws_dir, &mut keyed.imputations_dir] {
            *p = None;
        }
        let bytes = serde_json::to_vec(&keyed).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header line carried by every output file.
    pub fn header(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.seed)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Impute => "impute",
            Command::Analyze => "analyze",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Parses command-line arguments (program name first), merges the
/// optional config file under them and validates the result.
pub fn parse_and_validate<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (command, flags) = cli.command.split();
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    RunConfig::resolve(command, flags.over(file))
}
