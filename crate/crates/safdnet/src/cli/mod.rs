//! Command-line entry point: the full experiment lifecycle as composable,
//! file-based subcommands.
//!
//! ```text
//! synth    generate synthetic case directories
//! ingest   resample raw cases onto the 100 Hz grid
//! label    build horizon-aligned labeled segment archives
//! train    train a model on labeled archives
//! eval     score a labeled archive and write a metrics report
//! ablate   train all ablation variants and tabulate them
//! explain  export the frequency mask and saliency maps
//! ```
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! failure.

mod args;
mod commands;
mod config;

pub use config::{EvalConfig, RunConfig, SplitFractions};

use crate::evaluation::EvalError;
use crate::labeling::LabelError;
use crate::model::ModelError;
use crate::signal_io::SignalError;
use crate::synthgen::SynthError;
use crate::training::TrainError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {}", msg),
            CliError::Data(msg) => write!(f, "data error: {}", msg),
            CliError::Numeric(msg) => write!(f, "numerical failure: {}", msg),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidParams(_) => CliError::Usage(e.to_string()),
            SynthError::Schedule(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } | TrainError::Metric(_) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

const TOP_USAGE: &str = "usage: safdnet <subcommand> [flags]

subcommands:
  synth     generate synthetic case directories
  ingest    resample raw cases onto the 100 Hz grid
  label     build horizon-aligned labeled segment archives
  train     train a model on labeled archives
  eval      score a labeled archive and write a metrics report
  ablate    train all ablation variants and tabulate them
  explain   export the frequency mask and saliency maps

run `safdnet <subcommand> --help` for the flags of each subcommand.
";

/// Run one subcommand. Returns the process exit code.
pub fn dispatch(argv: &[String]) -> i32 {
    let Some(command) = argv.first() else {
        eprint!("{}", TOP_USAGE);
        return 1;
    };
    if command == "--help" || command == "help" || command == "-h" {
        print!("{}", TOP_USAGE);
        return 0;
    }
    let rest = &argv[1..];
    let result = match command.as_str() {
        "synth" => commands::synth(rest),
        "ingest" => commands::ingest(rest),
        "label" => commands::label(rest),
        "train" => commands::train(rest),
        "eval" => commands::eval(rest),
        "ablate" => commands::ablate(rest),
        "explain" => commands::explain(rest),
        other => Err(CliError::Usage(format!(
            "unknown subcommand {:?}\n\n{}",
            other, TOP_USAGE
        ))),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("safdnet {}: {}", command, err);
            err.exit_code()
        }
    }
}
