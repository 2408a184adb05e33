// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use graftlab_core::eval::Manifest;
use serde::Serialize;

use crate::CliError;

/// Provenance of one subcommand run, embedded in (or written next to)
/// every output.
#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Resolved arguments after merging config and flags.
    pub arguments: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub scheme_paths: Vec<PathBuf>,
    /// `(name, sha256)` of every checkpoint read or written.
    pub checkpoints: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_path: Option<&Path>, arguments: &impl Serialize) -> Self {
        Self {
            tool: format!("graftlab {}", env!("CARGO_PKG_VERSION")),
            subcommand: subcommand.into(),
            config_path: config_path.map(Path::to_path_buf),
            arguments: serde_json::to_value(arguments).unwrap_or_default(),
            ..Self::default()
        }
    }

    /// Fails with a data error naming the first input that does not exist.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        match self.inputs.iter().find(|p| !p.exists()) {
            Some(p) => Err(CliError::Data(format!("input {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    /// Flat `key: value` form for CSV, SVG, dump and checkpoint headers.
    pub fn pairs(&self) -> Manifest {
        let mut m: Manifest = vec![
            ("tool".into(), self.tool.clone()),
            ("subcommand".into(), self.subcommand.clone()),
            ("arguments".into(), self.arguments.to_string()),
        ];
        if let Some(p) = &self.config_path {
            m.push(("config".into(), p.display().to_string()));
        }
        if let Some(s) = self.seed {
            m.push(("seed".into(), s.to_string()));
        }
        for p in &self.inputs {
            m.push(("input".into(), p.display().to_string()));
        }
        for p in &self.scheme_paths {
            m.push(("schemes".into(), p.display().to_string()));
        }
        for (name, hash) in &self.checkpoints {
            m.push((format!("checkpoint {name}"), hash.clone()));
        }
        m
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
    }
}
