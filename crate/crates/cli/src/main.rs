use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feller_uniq_cli::{parse_config, run, CliError, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "feller-uniq", version, about = "Uniqueness classification for diffusion operators with potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a 1D or nD operator.
    Classify(Common),
    /// Entrance test at both endpoints of a 1D operator.
    Entrance(Common),
    /// Run the Fokker-Planck finite-volume solver.
    Fp(Common),
    /// Feynman-Kac Monte Carlo estimate.
    Fk(Common),
    /// Cross-validate classifier, boundary probe, FD and MC.
    Xval(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Overrides `lambdas`; repeat or separate with commas.
    #[arg(long = "lambda", value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; defaults to `output.report`, then stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&Common, &'static [Mode]) {
        match self {
            Command::Classify(c) => (c, &[Mode::Classify1d, Mode::ClassifyNd]),
            Command::Entrance(c) => (c, &[Mode::Entrance]),
            Command::Fp(c) => (c, &[Mode::FokkerPlanck]),
            Command::Fk(c) => (c, &[Mode::FeynmanKac]),
            Command::Xval(c) => (c, &[Mode::CrossValidate]),
        }
    }
}

fn load(common: &Common, modes: &[Mode]) -> Result<RunConfig, CliError> {
    let path = common.config.display().to_string();
    let text = std::fs::read_to_string(&common.config).map_err(|source| CliError::Io { path, source })?;
    let mut cfg = parse_config(&text)?;
    if !modes.contains(&cfg.mode) {
        let names: Vec<_> = modes.iter().map(|m| m.name()).collect();
        return Err(CliError::config(
            "/mode",
            format!("mode {} does not match this subcommand (expected {})", cfg.mode.name(), names.join(" or ")),
        ));
    }
    if !common.lambdas.is_empty() {
        cfg.lambdas = common.lambdas.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (common, modes) = cli.command.parts();
    let cfg = load(common, modes)?;
    let target = common.out.as_ref().map(|p| p.display().to_string()).or_else(|| cfg.output.report.clone());
    let report = run(cfg)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match target {
        Some(path) => std::fs::write(&path, json + "\n").map_err(|source| CliError::Io { path, source })?,
        None => println!("{json}"),
    }
    eprintln!("{}", report.summary());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
