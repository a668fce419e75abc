//! Command-line front end: configuration, the subcommands and their file
//! artifacts.

pub mod commands;
pub mod config;

pub use commands::execute;
pub use config::{parse_and_validate, Command, RunConfig};

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "COPULA_THREADS";

/// Sizes the global thread pool from `COPULA_THREADS` when it is set.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| anyhow::anyhow!("{THREADS_VAR}: expected a positive integer, got {raw:?}"))?;
    if n == 0 {
        anyhow::bail!("{THREADS_VAR}: must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
