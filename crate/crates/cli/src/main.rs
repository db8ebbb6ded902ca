use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use eeqcbf_cli::config::{apply_overrides, parse_params, preset_by_name};
use eeqcbf_cli::run::run_params;
use eeqcbf_cli::CliError;
use eeqcbf_core::presets::ExperimentParams;
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(
    name = "eeqcbf",
    version,
    about = "Observer-based safety filter experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the proposed and baseline controllers and write traces and a plot.
    Run(RunArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
struct RunArgs {
    /// example1a, example1b or example2
    #[arg(long)]
    preset: Option<String>,
    /// JSON config with a "preset" key and optional overrides
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Step size in seconds
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon in seconds
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Abort when the epsilon hypothesis fails
    #[arg(long)]
    strict: bool,
}

fn params(args: &RunArgs) -> Result<ExperimentParams, CliError> {
    let base = match (&args.preset, &args.config) {
        (Some(name), _) => ExperimentParams::preset(preset_by_name(name)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            parse_params(&text)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let mut flags = Map::new();
    if let Some(dt) = args.dt {
        flags.insert("dt".into(), Value::from(dt));
    }
    if let Some(t) = args.t_end {
        flags.insert("t_end".into(), Value::from(t));
    }
    if args.strict {
        flags.insert("strict_feasibility".into(), Value::Bool(true));
    }
    apply_overrides(&base, &flags)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Status 2 is reserved for a failed feasibility check.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let Command::Run(args) = cli.command;
    let result = params(&args).and_then(|p| run_params(&p, &args.out, &mut io::stdout()));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
