//! Configuration, experiment orchestration and result files.
//!
//! [`run`] resolves a configuration for one experiment kind, executes it
//! (independent seeds and sweep cells in parallel, merged in a fixed order)
//! and writes one file per artifact. A run that aborts or fails a check
//! leaves its partial outputs plus a `FAILED` marker listing the reasons.

pub mod config;
pub mod emit;
pub mod experiments;
pub mod rate;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind, Format, Network};
pub use emit::{emit, Artifact, Cell};
pub use rate::{rate_sweep, RateCell, RateFit, ReferenceSlopes};

use crate::error::{Error, Result};

pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl RunReport {
    /// 0 on success, 1 when a run aborted or a check failed.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failures.is_empty())
    }
}

fn write_marker(out: &Path, failures: &[String]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(FAILURE_MARKER), failures.join("\n") + "\n")?;
    Ok(())
}

/// Runs `kind` with `config` and writes its artifacts into `out`.
///
/// Configuration problems are reported as [`Error::Config`] before anything
/// is computed or written.
pub fn run(kind: ExperimentKind, config: &ExperimentConfig, out: &Path, format: Format) -> Result<RunReport> {
    let cfg = config.resolve(kind)?;
    let marker = out.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    let outcome = match experiments::run_seeded(kind, &cfg) {
        Ok(o) => o,
        Err(e) => {
            if !matches!(e, Error::Config(_)) {
                write_marker(out, &[format!("{kind}: {e}")])?;
            }
            return Err(e);
        }
    };
    let files = outcome.artifacts.iter().map(|a| emit(a, out, format)).collect::<Result<Vec<_>>>()?;
    if !outcome.failures.is_empty() {
        write_marker(out, &outcome.failures)?;
    }
    Ok(RunReport { files, failures: outcome.failures })
}
