use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mtar_core::cli::{exit_code, run, Mode, RunConfig};

/// Bayesian estimation, forecasting and simulation of multivariate threshold
/// autoregressive models.
#[derive(Parser)]
#[command(name = "mtar", version)]
struct Args {
    /// fit, forecast, simulate, compare, residuals or experiment
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::from_file(&args.config, Some(args.mode)).and_then(|mut config| {
        if let Some(d) = args.data {
            config.data = Some(d);
        }
        if let Some(o) = args.out {
            config.out_dir = o;
        }
        if let Some(s) = args.seed {
            config.control.seed = s;
        }
        run(&config)
    });
    match result {
        Ok(bundle) => {
            for f in &bundle.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ERROR: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
