//! Running an experiment end to end: report, traces, plot.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use eeqcbf_core::presets::ExperimentParams;
use eeqcbf_core::simloop::{feasibility_check, run_pair, safety_report, SafetyReport};
use serde_json::{Map, Value};

use crate::config::{apply_overrides, build, preset_by_name};
use crate::error::CliError;
use crate::plot::emit_plot;
use crate::trace::{emit_csv, fmt_num};

/// Paths written by a successful run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub proposed_csv: PathBuf,
    pub baseline_csv: PathBuf,
    pub plot: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn io_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn summary_line(label: &str, r: &SafetyReport) -> String {
    let first = r
        .first_violation_t
        .map_or_else(|| "none".to_owned(), fmt_num);
    format!(
        "{label}: min h {}, min h0 {}, first violation t {first}, bound violations {}, infeasible steps {}",
        fmt_num(r.min_h_true),
        fmt_num(r.min_h0),
        r.bound_violations,
        r.infeasible_steps
    )
}

/// Runs proposed and baseline controllers for `params`, writing
/// `<preset>_proposed.csv`, `<preset>_baseline.csv` and `<preset>_h.svg`.
pub fn run_params(
    params: &ExperimentParams,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<RunOutputs, CliError> {
    let cfg = build(params)?;
    let name = params.preset.as_str();

    let check = feasibility_check(&cfg)?;
    writeln!(
        out,
        "{name}: epsilon bound {}, epsilon {} ({})",
        fmt_num(check.epsilon_bound),
        fmt_num(check.epsilon_used),
        if check.ok() { "ok" } else { "not certified" }
    )
    .map_err(io_err)?;
    if let Some(w) = check.warning() {
        writeln!(out, "warning: {w}").map_err(io_err)?;
    }

    let (proposed, baseline) = run_pair(&cfg)?;
    writeln!(
        out,
        "{}",
        summary_line("proposed", &safety_report(&proposed, &cfg)?)
    )
    .map_err(io_err)?;
    writeln!(
        out,
        "{}",
        summary_line("baseline", &safety_report(&baseline, &cfg)?)
    )
    .map_err(io_err)?;

    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let outputs = RunOutputs {
        proposed_csv: out_dir.join(format!("{name}_proposed.csv")),
        baseline_csv: out_dir.join(format!("{name}_baseline.csv")),
        plot: out_dir.join(format!("{name}_h.svg")),
    };
    write_file(&outputs.proposed_csv, &emit_csv(&proposed))?;
    write_file(&outputs.baseline_csv, &emit_csv(&baseline))?;
    let svg = emit_plot(
        &[("proposed", &proposed), ("baseline", &baseline)],
        "h_true",
    )?;
    write_file(&outputs.plot, &svg)?;
    for p in [&outputs.proposed_csv, &outputs.baseline_csv, &outputs.plot] {
        writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
    }
    Ok(outputs)
}

/// Runs a named preset with overrides and returns the process exit status.
pub fn run_preset(
    name: &str,
    overrides: &Map<String, Value>,
    out_dir: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> u8 {
    let result = preset_by_name(name)
        .and_then(|p| apply_overrides(&ExperimentParams::preset(p), overrides))
        .and_then(|params| run_params(&params, out_dir, out));
    match result {
        Ok(_) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
