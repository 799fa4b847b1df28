//! CSV and manifest writers.

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::IterationRecord;

use super::config::{RunConfig, DIAGNOSTICS_KEY};

pub const HISTORY_HEADER: [&str; 8] = ["epoch", "iter", "mu", "batch", "psi", "residual", "rel_l2_err", "bregman"];

/// Shortest text that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// `epoch,iter,mu,batch,psi,residual,rel_l2_err,bregman`; absent values are
/// empty fields.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.iter.to_string(),
            optional(r.mu),
            r.batch.map(|b| b.to_string()).unwrap_or_default(),
            format_float(r.psi),
            format_float(r.residual),
            optional(r.rel_l2_err),
            optional(r.bregman),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The effective config followed by a `[diagnostics]` table.
pub fn write_manifest(path: &Path, config: &RunConfig, diagnostics: toml::Table) -> Result<()> {
    let mut tail = toml::Table::new();
    tail.insert(DIAGNOSTICS_KEY.into(), toml::Value::Table(diagnostics));
    let tail = toml::to_string(&tail).map_err(|e| Error::Config(format!("{e}")))?;
    let text = format!("{}\n{tail}", config.to_toml_string()?);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
