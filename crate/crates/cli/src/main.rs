use std::process::ExitCode;

fn run() -> anyhow::Result<()> {
    qcopula_cli::configure_threads()?;
    let cfg = match qcopula_cli::parse_and_validate(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(e) => match e.downcast::<clap::Error>() {
            Ok(clap_err) => clap_err.exit(),
            Err(e) => return Err(e.context("invalid configuration")),
        },
    };
    qcopula_cli::execute(&cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
