//! `npch`: solve, verify and inspect harmonic maps into NPC targets.
//!
//! Exit status: 0 success, 1 usage error, 2 convergence failure,
//! 3 invariant violation found during verification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use npc_harmonic::Error;

#[derive(Parser, Debug)]
#[command(name = "npch", version, about = "Discrete harmonic maps into non-positively curved targets")]
pub struct Cli {
    /// key=value file supplying defaults for any long option; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (red-black sweeps only).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dirichlet or equivariant relaxation on a graph domain.
    Solve(SolveArgs),
    /// Weighted Karcher mean of a JSON point cloud.
    Karcher(KarcherArgs),
    /// Pointwise identity and curvature-sign checks on named charts.
    Verify(VerifyArgs),
    /// Harmonic metric on a twisted cycle, with refinement rates.
    Corlette(CorletteArgs),
    /// Leaf-space projection of a polynomial quadratic differential.
    Foliation(FoliationArgs),
    /// Random-quadruple comparison inequalities for target spaces.
    CheckNpc(CheckNpcArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Graph in npcgraph v1 format.
    #[arg(long)]
    pub domain: PathBuf,
    /// Target, e.g. euc:3, hyp, spd:2, spd:2:complex, pod:3.
    #[arg(long)]
    pub target: String,
    /// JSON object mapping boundary vertex ids to points.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Representation: JSON file or inline `A=diag(2,0.5);B=...`.
    #[arg(long)]
    pub rep: Option<String>,
    /// JSON array of initial values, one per vertex.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_sweeps: usize,
    /// sequential or red-black.
    #[arg(long, default_value = "sequential")]
    pub order: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Equivariant solves fail once values drift this far.
    #[arg(long, default_value_t = 30.0)]
    pub divergence_bound: f64,
    /// CSV trace with columns sweep,energy,max_disp.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct KarcherArgs {
    /// JSON {"space": SPEC, "points": [...], "weights": [...]}.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// tension, weitzenbock, pluriharmonic, sampson, hermitian-neg or strong-neg.
    #[arg(long)]
    pub identity: String,
    #[arg(long)]
    pub chart: String,
    /// Sample points (draws for the sign tests).
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Residual bound for the pointwise identities.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorletteArgs {
    /// One generator: JSON file or inline `A=diag(2,0.5)`.
    #[arg(long)]
    pub rep: String,
    /// Matrix size of the flat bundle.
    #[arg(long)]
    pub n: usize,
    /// real or complex.
    #[arg(long, default_value = "real")]
    pub field: String,
    /// Vertices on the cycle.
    #[arg(long, default_value_t = 64)]
    pub cycle: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_sweeps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FoliationArgs {
    /// Degree of the polynomial z^k.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    /// Grid points per side of the coarse window.
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    /// Excluded band around critical leaves, in grid spacings.
    #[arg(long, default_value_t = 3.0)]
    pub exclusion: f64,
    /// scaled or plain.
    #[arg(long, default_value = "scaled")]
    pub threshold: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckNpcArgs {
    /// Target spec; all built-in kinds when omitted.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Spread of the random points.
    #[arg(long, default_value_t = 1.5)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failures of the driver, each with its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Convergence(String),
    Violation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Convergence(_) => 2,
            Failure::Violation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Convergence(m) | Failure::Violation(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let mut root = &e;
        while let Error::AtVertex { source, .. } = root {
            root = source;
        }
        match root {
            Error::NonConvergence { .. } | Error::SweepLimit { .. } | Error::Divergence { .. } => Failure::Convergence(msg),
            Error::Invariant(_) => Failure::Violation(msg),
            _ => Failure::Usage(msg),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match config::parse_with_config(argv) {
        Ok(cli) => cli,
        Err(config::ParseFailure::Clap(e)) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
        Err(config::ParseFailure::Config(msg)) => {
            eprintln!("npch: {msg}");
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("npch: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
