//! Small writers for CSV tables and run manifests.

use std::path::Path;

use serde_json::json;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Comma separated table; cells are never quoted, so keep them numeric.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render()).map_err(|e| CliError::io_at(path, e))
    }
}

/// `manifest.json`: what ran, with which arguments, and what it wrote.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    argv: &[String],
    config: serde_json::Value,
    outputs: &[String],
) -> CliResult<()> {
    let doc = json!({
        "command": command,
        "argv": argv,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": outputs,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| CliError::io_at(&path, e))
}
