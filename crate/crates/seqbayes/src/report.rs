//! Machine-parseable run reports and CSV output.
//!
//! Reports serialize as TOML with the timing table last, so byte comparisons
//! of two runs can stop at the `[timing]` line. CSV files are RFC-4180-style
//! with a mandatory header row; floats carry 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Name of the deterministic generator used everywhere randomness appears.
pub const RNG_NAME: &str = "ChaCha12 with per-replicate streams (seed, replicate-index)";

/// One named check with its outcome and measured deviation.
#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
}

/// Wall-clock totals, kept in their own trailing table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Timing {
    pub total_s: f64,
}

/// Echo of a run: configuration, checks, outputs, and timing.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub platform: String,
    pub rng: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: toml::Value,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckLine>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(config: impl Serialize, seed: Option<u64>) -> Self {
        Self {
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            platform: format!("{}/{}", std::env::consts::OS, std::env::consts::ARCH),
            rng: RNG_NAME.to_string(),
            seed,
            config: toml::Value::try_from(config).unwrap_or(toml::Value::String(
                "unserializable configuration".into(),
            )),
            outputs: Vec::new(),
            checks: Vec::new(),
            timing: Timing { total_s: 0.0 },
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, deviation: Option<f64>, note: impl Into<String>) {
        self.checks.push(CheckLine {
            name: name.into(),
            pass,
            deviation,
            note: note.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `report.toml` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.toml");
        let text =
            toml::to_string(self).map_err(|e| Error::Validation(format!("report: {e}")))?;
        fs::write(&path, text)?;
        Ok(path)
    }

    /// One `name: PASS/FAIL` line per check, for terminal output.
    pub fn summary_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let dev = c
                    .deviation
                    .map(|d| format!(" (deviation {d:.3e})"))
                    .unwrap_or_default();
                let note = if c.note.is_empty() {
                    String::new()
                } else {
                    format!(" — {}", c.note)
                };
                format!(
                    "{} {}{dev}{note}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name
                )
            })
            .collect()
    }
}

/// Full-precision float formatting: 17 significant digits round-trip f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes an RFC-4180-style CSV with a header row. Fields are written as
/// given; callers format floats with [`fmt_f64`].
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Validation(format!(
                "CSV row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}
