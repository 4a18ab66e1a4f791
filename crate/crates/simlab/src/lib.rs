//! Monte Carlo studies and figure data for the `phidiv` estimators.
//!
//! A study is described by a versioned JSON config ([`config`]), run with
//! one independent RNG stream per run ([`runner`]) and written as CSV with
//! six significant digits ([`format`]). Figure data comes from the
//! population-level routines of `phidiv::robustness` ([`figures`]).

pub mod config;
pub mod contamination;
mod error;
pub mod figures;
pub mod format;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, SCHEMA_VERSION};
pub use contamination::{apply_contamination, ContaminationScheme, ExtremeMode, NoiseDist};
pub use error::{Result, SimError};
pub use figures::{emit_figure_data, FigureData, FigureKind};
pub use runner::{run_experiment, RunOptions, RunRow, RunSummary, Stats, SummaryRow};
