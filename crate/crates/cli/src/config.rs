// SPDX-License-Identifier: MIT OR Apache-2.0

//! Merging of JSON config files with command-line flags.
//!
//! Every subcommand's arguments double as its config schema: a `--config`
//! file holds the same fields in snake_case. A flag given on the command
//! line replaces the config value; list flags replace the whole list.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

fn non_empty(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Array(a) => !a.is_empty(),
        _ => true,
    }
}

/// Overlays the set fields of `flags` onto the file at `config`.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = config else {
        return serde_json::from_value(serde_json::to_value(flags).map_err(usage)?).map_err(usage);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut merged: Map<String, Value> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(given) = serde_json::to_value(flags).map_err(usage)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in given {
        if non_empty(&v) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn usage(e: serde_json::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Unwraps a field that must come from either a flag or the config file.
pub fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or config field {})", name.replace('-', "_"))))
}
