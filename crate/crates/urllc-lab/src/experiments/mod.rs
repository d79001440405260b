//! Named experiment presets, parameter sweeps, and result reporting.
//!
//! A sweep walks one variable (load ratio, cell size, payload, busy
//! probability, or SIR threshold) across a grid, evaluates the analytic
//! curves at every point, optionally runs the configured Monte Carlo
//! plans alongside them, and writes a flat CSV of result rows.  The
//! [`report`] module re-reads those CSVs and checks the simulations
//! against the analytic bounds.
//!
//! All rows produced by one sweep share a configuration hash so that
//! mixed or stale artifacts are detected when reports are assembled.

pub mod presets;
pub mod report;
pub mod sweep;

pub use presets::{preset, preset_names, PresetFile, SweepFamily, SweepSpec, SweepVariable};
pub use report::{summarize_files, PresetReport, ReportOutcome};
pub use sweep::{analytic_outage, matched_outage, run_sweep, SweepOutcome, CSV_HEADER};

use thiserror::Error;

/// Errors raised while preparing, running, or summarizing experiments.
#[derive(Debug, Error)]
pub enum ExperimentError {
    /// The requested preset name is not in the built-in catalog.
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    /// A sweep specification failed validation.
    #[error("invalid sweep spec: {0}")]
    InvalidSpec(String),
    /// A result CSV does not have the expected column layout.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    /// Result rows mix configuration hashes or malformed fields.
    #[error("corrupt result file: {0}")]
    CorruptResults(String),
    /// Underlying configuration problem.
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    /// Underlying closed-form evaluation problem.
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    /// Underlying simulation problem.
    #[error(transparent)]
    Simulation(#[from] crate::montecarlo::MonteCarloError),
    /// Underlying coding-rate inversion problem.
    #[error(transparent)]
    ShortPacket(#[from] crate::shortpacket::ShortPacketError),
    /// Underlying ζ-table or fitting problem.
    #[error(transparent)]
    Fitting(#[from] crate::fitting::FittingError),
    /// File I/O failed while reading specs or writing results.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
