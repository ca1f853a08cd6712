//! Command-line plumbing and the experiment harness for `quadlab-core`.

pub mod config;
pub mod experiments;
pub mod io;
pub mod report;

pub use config::{ExperimentConfig, ExperimentId};
pub use io::{load_csv, IoError};
pub use report::{emit_report, Format, ReportTable, Verdict};
