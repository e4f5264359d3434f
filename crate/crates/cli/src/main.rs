mod args;
mod commands;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{config_args, long_flags, Cli, Command, SUBCOMMANDS};
use commands::{PartialFailure, UsageError};

/// Appends values from the config file named by `--config` or
/// CITESCOPE_CONFIG for flags the command line and environment left unset.
fn with_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = std::env::var_os("CITESCOPE_CONFIG").map(std::path::PathBuf::from);
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).map(Into::into);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let Some(sub) = argv.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("config {}: {e}", path.display()))?;
    let accepts = |s: &str, key: &str| long_flags(s).iter().any(|f| f == key);
    let extra = config_args(&text, sub, &argv, accepts)?;
    Ok(argv.into_iter().chain(extra).collect())
}

fn main() -> ExitCode {
    let argv = match with_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CITESCOPE_LOG", level)).init();

    let jobs = cli.jobs.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Ingest(a) => commands::ingest(a, jobs),
        Command::Synth(a) => commands::synth(a, jobs),
        Command::Backtest(a) => commands::backtest(a, jobs),
        Command::Grid(a) => commands::grid(a, jobs),
        Command::Report(a) => commands::report(a, jobs),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<PartialFailure>() => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
