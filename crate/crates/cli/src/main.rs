//! `qnc`: reproducible experiments on the quantum butterfly network.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qnc_core::Prime;

#[derive(Parser, Debug)]
#[command(name = "qnc", version, about = "Secure quantum network coding on the butterfly network")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (default: number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Omit the `generated_at` field from JSON reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the honest protocol and check the delivered entanglement.
    Honest(HonestArgs),
    /// Certify one attack.
    Attack(AttackArgs),
    /// Certify many attacks on every attackable edge.
    Sweep(SweepArgs),
    /// Check the classical code: recovery, secrecy, matrices.
    Classical(ClassicalArgs),
}

fn parse_prime(s: &str) -> Result<Prime, String> {
    let n: u64 = s.parse().map_err(|e| format!("{e}"))?;
    Prime::new(n).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct HonestArgs {
    #[arg(long, default_value = "3", value_parser = parse_prime)]
    pub p: Prime,
    /// Fix the key B1; drawn per trial otherwise.
    #[arg(long)]
    pub b1: Option<u32>,
    #[arg(long, env = "QNC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackChoice {
    Random,
    KeepPhi0,
    MeasureZ,
    MeasureX,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantChoice {
    FullPad,
    WeakPad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Expectation {
    Secure,
    Insecure,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long, default_value = "3", value_parser = parse_prime)]
    pub p: Prime,
    #[arg(long, value_parser = clap::value_parser!(u8).range(5..=11))]
    pub edge: u8,
    #[arg(long, value_enum, default_value_t = AttackChoice::Random)]
    pub attack: AttackChoice,
    /// Environment dimension of a random attack.
    #[arg(long = "d-e", default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub d_e: u64,
    #[arg(long, value_enum, default_value_t = VariantChoice::FullPad)]
    pub variant: VariantChoice,
    #[arg(long, env = "QNC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum)]
    pub expect: Option<Expectation>,
    /// Sample this many records when the record space exceeds the cap.
    #[arg(long, num_args = 0..=1, default_missing_value = "512")]
    pub sample: Option<usize>,
    /// Apply the sinks' correction before tracing out their outputs.
    #[arg(long)]
    pub with_recovery: bool,
    /// Include the average output fidelity under the attack.
    #[arg(long)]
    pub fidelity: bool,
    /// Leave per-record summaries out of the JSON report.
    #[arg(long)]
    pub no_branches: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value = "3", value_parser = parse_prime)]
    pub p: Prime,
    /// Random attacks per edge.
    #[arg(long, default_value_t = 20)]
    pub attacks: u64,
    /// Environment dimensions, cycled over the random attacks.
    #[arg(long = "d-e", value_delimiter = ',', default_values_t = vec![1, 3, 9])]
    pub d_e: Vec<usize>,
    /// Also run keep-phi0, measure-z and measure-x on every edge.
    #[arg(long)]
    pub include_canonical: bool,
    #[arg(long, value_enum, default_value_t = VariantChoice::FullPad)]
    pub variant: VariantChoice,
    #[arg(long, env = "QNC_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, num_args = 0..=1, default_missing_value = "512")]
    pub sample: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ClassicalArgs {
    #[arg(long, default_value = "3", value_parser = parse_prime)]
    pub p: Prime,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let sink = output::Sink {
        path: cli.out.clone(),
        format: cli.format,
        timestamp: !cli.no_timestamp,
    };
    let result = match &cli.command {
        Command::Honest(a) => commands::honest(a, &sink),
        Command::Attack(a) => commands::attack(a, &sink),
        Command::Sweep(a) => commands::sweep(a, &sink),
        Command::Classical(a) => commands::classical(a, &sink),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
