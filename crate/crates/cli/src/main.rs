mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenario_regret::error::Error;
use scenario_regret::evaluation::{ExperimentKind, Scale};
use scenario_regret::structure::PolicyStructure;
use scenario_regret::synthesis::Objective;

use commands::{CertifyArgs, Overrides, ValidateArgs};

/// Scenario-based regret-optimal control synthesis.
#[derive(Parser)]
#[command(name = "scenario-regret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario program described by a config file.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long)]
        structure: Option<PolicyStructure>,
        /// Number of training scenarios.
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Also write the assembled conic program.
        #[arg(long)]
        dump_program: bool,
    },
    /// Scenario counts for given violation and confidence levels.
    Certify {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        beta: f64,
        /// Number of decision variables.
        #[arg(long, conflicts_with = "result")]
        delta: Option<usize>,
        /// Take the structural count from a synth result.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the violation rate of a synthesized policy on fresh samples.
    Validate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 1000)]
        validate_samples: usize,
        /// Validation seed (default: dataset seed + 1).
        #[arg(long)]
        seed: Option<u64>,
        /// Draw from the training set instead of the parameter distribution.
        #[arg(long)]
        replay_training: bool,
        /// Test against this bound instead of the synthesized one.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Output directory (default: next to the result file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the experiment pipelines.
    Repro {
        /// violation-curve, regret-runtime-curve or cost-comparison.
        kind: ExperimentKind,
        #[arg(long, default_value = "small")]
        scale: Scale,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 3,
        Error::SolverFailure { .. }
        | Error::NumericalFailure(_)
        | Error::EigenFailure
        | Error::SingularMap { .. }
        | Error::SampleMismatch => 4,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth {
            config,
            out,
            seed,
            objective,
            structure,
            scenarios,
            eps,
            beta,
            dump_program,
        } => {
            let ov = Overrides {
                seed,
                objective,
                structure,
                scenarios,
                eps,
                beta,
                out,
            };
            commands::synth(&config, &ov, dump_program).map(drop)
        }
        Command::Certify {
            eps,
            beta,
            delta,
            result,
            out,
        } => commands::certify(&CertifyArgs {
            eps,
            beta,
            delta,
            result,
            out,
        })
        .map(drop),
        Command::Validate {
            result,
            validate_samples,
            seed,
            replay_training,
            gamma,
            eps,
            beta,
            out,
        } => commands::validate(&ValidateArgs {
            result,
            samples: validate_samples,
            seed,
            replay_training,
            gamma,
            eps,
            beta,
            out,
        })
        .map(drop),
        Command::Repro { kind, scale, out, seed } => commands::repro(kind, scale, &out, seed).map(drop),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
