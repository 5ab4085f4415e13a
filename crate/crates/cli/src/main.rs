use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hrburst::Polarity;
use hrburst_cli::{run, CliError, Command, Overrides, RunConfig};

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum PolarityArg {
    Exc,
    Inh,
}

/// Burst phase response toolkit for the Hindmarsh-Rose neuron.
#[derive(Debug, Parser)]
#[command(name = "hrburst", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Synaptic conductance (replaces the configured list).
    #[arg(long)]
    gsyn: Option<f64>,
    #[arg(long, value_enum)]
    polarity: Option<PolarityArg>,
    /// Perturbation onset phase.
    #[arg(long)]
    theta: Option<f64>,
    /// Frozen slow variable for isochron portraits.
    #[arg(long)]
    h: Option<f64>,
}

fn execute(args: Args) -> Result<Vec<String>, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        out: args.out,
        gsyn: args.gsyn,
        polarity: args.polarity.map(|p| match p {
            PolarityArg::Exc => Polarity::Excitatory,
            PolarityArg::Inh => Polarity::Inhibitory,
        }),
        theta: args.theta,
        h: args.h,
    };
    cfg.apply(&overrides);
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?;
    }
    Ok(run(args.command, &cfg, &overrides)?.lines)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
