//! Configuration, scenario sweeps, CSV output and the validation suite.

pub mod config;
pub mod output;
pub mod sweep;
pub mod validate;

pub use config::{preset, ScenarioConfig, PRESETS};
pub use output::{dump_matrices, emit_csv, read_csv, write_rows};
pub use sweep::{run_sweep, ResultRow, Scenario};
pub use validate::{validate, validate_with, ValidateOptions, ValidationReport};
