//! `nqs`: train, inspect and sample autoregressive neural quantum states.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nqs_core::ansatz::AnsatzKind;
use nqs_core::NqsError;

#[derive(Parser, Debug)]
#[command(name = "nqs", version, about = "Variational Monte Carlo with autoregressive neural quantum states")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "NQS_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an ansatz from a TOML run configuration.
    Train(TrainArgs),
    /// Exact ground energy by diagonalisation.
    Diag(DiagArgs),
    /// Parameter and FLOP-per-token report.
    Flops(FlopsArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Convert an FCIDUMP file to Pauli text.
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub ansatz: Option<AnsatzKind>,
    /// Disable entropy annealing.
    #[arg(long)]
    pub no_vna: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Skip the exact ground energy in the summary.
    #[arg(long)]
    pub no_oracle: bool,
}

#[derive(Args, Debug)]
pub struct DiagArgs {
    #[arg(long)]
    pub hamiltonian: PathBuf,
    /// `n_up,n_down`; defaults to the sector stored with the Hamiltonian.
    #[arg(long)]
    pub sector: Option<String>,
    /// Diagonalise over all qubit configurations.
    #[arg(long, conflicts_with = "sector")]
    pub full: bool,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    #[arg(long, default_value_t = 1)]
    pub n_block: u64,
    #[arg(long, default_value_t = 16)]
    pub d_model: u64,
    /// Defaults to `d_model`.
    #[arg(long)]
    pub d_retn: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub d_ff: u64,
    #[arg(long)]
    pub n_seq: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub draws: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub prune_singletons: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<NqsError>() {
        Some(NqsError::Usage(_) | NqsError::Config(_)) => 1,
        _ if err.is::<config::ConfigError>() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Diag(a) => commands::diag(&a),
        Command::Flops(a) => commands::flops(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Convert(a) => commands::convert(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
