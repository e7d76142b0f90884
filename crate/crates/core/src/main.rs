use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ntkgd::harness::{self, ExperimentConfig, ExperimentKind, Format};
use ntkgd::Error;

#[derive(Parser)]
#[command(name = "ntkgd", version, about = "Gradient-descent and NTK experiments for shallow and deep networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration (JSON if the file ends in .json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; replaces the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shallow network and write its loss trace.
    TrainShallow(Common),
    /// Train the last hidden layer of the deep network.
    TrainDeep(Common),
    /// Eigenpairs of the discretized shallow limit kernel.
    NtkEigen(Common),
    /// Distance of the empirical NTK from its limit over widths.
    NtkConcentration(Common),
    /// NTK change under weight perturbations.
    NtkPerturbation(Common),
    /// Check the two-sequence bound on given or random parameters.
    GroenwallCheck(Common),
    /// Final error against width, with a bootstrap slope interval.
    RateSweep(Common),
    /// Forward Gaussian-process kernels by layer.
    GpTable(Common),
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::TrainShallow(c) => (ExperimentKind::TrainShallow, c),
            Command::TrainDeep(c) => (ExperimentKind::TrainDeep, c),
            Command::NtkEigen(c) => (ExperimentKind::NtkEigen, c),
            Command::NtkConcentration(c) => (ExperimentKind::NtkConcentration, c),
            Command::NtkPerturbation(c) => (ExperimentKind::NtkPerturbation, c),
            Command::GroenwallCheck(c) => (ExperimentKind::GroenwallCheck, c),
            Command::RateSweep(c) => (ExperimentKind::RateSweep, c),
            Command::GpTable(c) => (ExperimentKind::GpTable, c),
        }
    }
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let mut config = match &args.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    let out = args.out.or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("results").join(kind.name()));
    let format = args.format.or(config.format).unwrap_or_default();
    match harness::run(kind, &config, &out, format) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            for msg in &report.failures {
                eprintln!("failed: {msg}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
