//! `bodx`: diagnose priors, search and evaluate Bayesian D-optimal designs,
//! and profile their local efficiency.
//!
//! Exit codes: 0 success (or non-singular prior), 1 error, 2 singular prior,
//! 3 inconclusive diagnosis, 4 design refused under a singular prior.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bodx",
    version,
    about = "Bayesian D-optimal design with bound-based evaluation"
)]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    BayesLower,
    BayesUpper,
    Local,
    Ew,
    Psi,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::BayesLower => "bayes-lower",
            Objective::BayesUpper => "bayes-upper",
            Objective::Local => "local",
            Objective::Ew => "ew",
            Objective::Psi => "psi",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify the prior as singular, non-singular or inconclusive.
    Diagnose { config: PathBuf },
    /// Search an exact design.
    Design {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "bayes-lower")]
        objective: Objective,
        /// Number of runs (overrides `search.n`).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-start trace.
        #[arg(long)]
        trace: bool,
        /// Search even if the prior is singular.
        #[arg(long)]
        force: bool,
    },
    /// Bracket the objective of a design file.
    Evaluate {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emulator-based local-efficiency profile of a design file.
    Profile {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search bayes-lower and EW designs (and Ψ with `--psi`) and tabulate
    /// their predicted efficiencies.
    Compare {
        config: PathBuf,
        #[arg(long)]
        psi: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write the quadrature scheme and summarize it.
    Quadrature {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("BODX_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    log::warn!("BODX_THREADS ignored: {e}");
                }
            }
            _ => log::warn!("BODX_THREADS must be a positive integer, got `{v}`"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    init_threads();
    let result = match cli.command {
        Command::Diagnose { config } => commands::diagnose(&config),
        Command::Design {
            config,
            objective,
            n,
            starts,
            seed,
            out,
            trace,
            force,
        } => commands::design(&commands::DesignArgs {
            config,
            objective,
            n,
            starts,
            seed,
            out,
            trace,
            force,
        }),
        Command::Evaluate {
            config,
            design,
            out,
        } => commands::evaluate(&config, &design, out.as_deref()),
        Command::Profile {
            config,
            design,
            out,
        } => commands::profile(&config, &design, out.as_deref()),
        Command::Compare {
            config,
            psi,
            out,
            force,
        } => commands::compare(&config, psi, out.as_deref(), force),
        Command::Quadrature { config, out } => commands::quadrature(&config, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
