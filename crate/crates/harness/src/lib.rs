//! Experiment orchestration for the PU reward-learning lab.

pub mod chart;
pub mod config;
pub mod experiment;
pub mod gap;
pub mod metrics;
pub mod pubench;
pub mod sweep;

pub use chart::{emit_chart, ChartInput};
pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentResult};
pub use gap::{domain_gap_study, GapStudy};
pub use sweep::{sweep, SweepParam, SweepSpec};
