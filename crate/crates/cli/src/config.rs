//! JSON run configuration: a `"preset"` name plus flat overrides.
//!
//! ```json
//! { "preset": "example1a", "epsilon": 0.05, "t_end": 5.0 }
//! ```
//!
//! Override keys are the field names of [`ExperimentParams`]; anything else
//! is rejected.

use eeqcbf_core::presets::{ExperimentParams, PresetName};
use eeqcbf_core::simloop::SimConfig;
use serde_json::{Map, Value};

use crate::error::CliError;

pub fn preset_by_name(name: &str) -> Result<PresetName, CliError> {
    name.parse()
        .map_err(|_| CliError::UnknownPreset(name.to_owned()))
}

/// Applies `overrides` on top of `params`, checking each key on its own so
/// errors name the offending key.
pub fn apply_overrides(
    params: &ExperimentParams,
    overrides: &Map<String, Value>,
) -> Result<ExperimentParams, CliError> {
    let Value::Object(mut merged) =
        serde_json::to_value(params).expect("parameters serialize to an object")
    else {
        unreachable!("parameters serialize to an object")
    };
    for (key, value) in overrides {
        if key == "preset" {
            return Err(CliError::Config {
                key: key.clone(),
                reason: "the preset cannot be overridden".into(),
            });
        }
        if !merged.contains_key(key) {
            return Err(CliError::Config {
                key: key.clone(),
                reason: "unknown key".into(),
            });
        }
        merged.insert(key.clone(), value.clone());
        serde_json::from_value::<ExperimentParams>(Value::Object(merged.clone())).map_err(|e| {
            CliError::Config {
                key: key.clone(),
                reason: e.to_string(),
            }
        })?;
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Argument(e.to_string()))
}

pub fn parse_params(text: &str) -> Result<ExperimentParams, CliError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = doc else {
        return Err(CliError::Parse {
            line: 1,
            column: 1,
            message: "top level must be a JSON object".into(),
        });
    };
    let name = match obj.remove("preset") {
        Some(Value::String(s)) => s,
        Some(_) => {
            return Err(CliError::Config {
                key: "preset".into(),
                reason: "must be a string".into(),
            })
        }
        None => {
            return Err(CliError::Config {
                key: "preset".into(),
                reason: "missing".into(),
            })
        }
    };
    let params = ExperimentParams::preset(preset_by_name(&name)?);
    apply_overrides(&params, &obj)
}

pub fn build(params: &ExperimentParams) -> Result<SimConfig, CliError> {
    params.build().map_err(|e| match e {
        eeqcbf_core::Error::Config { key, reason } => CliError::Config { key, reason },
        other => other.into(),
    })
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    build(&parse_params(text)?)
}
