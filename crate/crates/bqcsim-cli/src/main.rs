//! `bqcsim` command-line front end.

mod artifact;
mod commands;
mod config;
mod selftest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "bqcsim", version, about = "Blind quantum computation simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML or JSON run configuration (`.json` selects JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Monte Carlo shots (samples, sessions, trials; see each subcommand).
    #[arg(long, global = true)]
    pub shots: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for shot-parallel work; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Axis {
    Comm,
    Loc,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Fidelity / efficiency / hiding trade-off over R_h on random bricklayer circuits.
    Tradeoff(commands::TradeoffArgs),
    /// Frame potentials of bricklayer and Pauli-rotation families and their pairing line.
    Express(commands::ExpressArgs),
    /// Logical error rate of one random logical circuit configuration.
    QecRun(commands::QecRunArgs),
    /// Threshold crossing between two code distances.
    QecThreshold(commands::ThresholdArgs),
    /// Convert circuit, round and gate logical error rates and report the gate budget.
    GateCeiling(commands::CeilingArgs),
    /// Projected wall-clock duration for a platform profile.
    Timing(commands::TimingArgs),
    /// Dark-count error against link distance.
    Darkcount(commands::DarkCountArgs),
    /// Frame-averaged server-state distances for the blind constructions.
    VerifyBlindness(commands::BlindnessArgs),
    /// Run the server side of the protocol over TCP.
    Serve(commands::ServeArgs),
    /// Run the client side of the protocol over TCP.
    Client(commands::ClientArgs),
    /// Fast invariant suite.
    Selftest,
}

fn exit_code(e: &bqcsim::Error) -> u8 {
    match e {
        bqcsim::Error::Config(_) | bqcsim::Error::Invalid(_) => 2,
        bqcsim::Error::Capacity(_) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> bqcsim::Result<()> {
    let file = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let jobs = cli.global.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(bqcsim::Error::Config("--jobs must be at least 1".into()));
    }
    if let Some(j) = jobs {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let ctx = commands::Ctx::new(&cli.global, file)?;
    match cli.cmd {
        Cmd::Tradeoff(a) => commands::tradeoff(&ctx, a),
        Cmd::Express(a) => commands::express(&ctx, a),
        Cmd::QecRun(a) => commands::qec_run(&ctx, a),
        Cmd::QecThreshold(a) => commands::qec_threshold(&ctx, a),
        Cmd::GateCeiling(a) => commands::gate_ceiling(&ctx, a),
        Cmd::Timing(a) => commands::timing(&ctx, a),
        Cmd::Darkcount(a) => commands::darkcount(&ctx, a),
        Cmd::VerifyBlindness(a) => commands::verify_blindness(&ctx, a),
        Cmd::Serve(a) => commands::serve(&ctx, a),
        Cmd::Client(a) => commands::client(&ctx, a),
        Cmd::Selftest => selftest::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&bqcsim::Error::Config("x".into())), 2);
        assert_eq!(exit_code(&bqcsim::Error::invalid("x")), 2);
        assert_eq!(exit_code(&bqcsim::Error::capacity("x")), 3);
        assert_eq!(exit_code(&bqcsim::Error::Protocol("x".into())), 1);
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["bqcsim", "tradeoff", "--shots", "7", "--seed", "3", "--qubits", "4"]).unwrap();
        assert_eq!((cli.global.shots, cli.global.seed), (Some(7), Some(3)));
    }
}
