//! Seeded ensembles, comparisons against the theory, and their reports.

pub mod compare;
pub mod config;
pub mod ensemble;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, Target};
pub use ensemble::{run_ensemble, Ensemble, Replicate, ReplicateSummary};
pub use report::{ExperimentError, Report, Session};
