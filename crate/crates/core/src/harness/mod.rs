//! Experiment drivers: configuration, model assembly, training loops,
//! equivalence and gradient checks, benchmarks and reporting.

pub mod arch;
pub mod bench;
pub mod checks;
pub mod config;
pub mod convert;
pub mod equivalence;
pub mod export;
pub mod network;
pub mod report;
pub mod train;

pub use arch::{Architecture, LayerSpec};
pub use config::{ExperimentConfig, ExperimentKind};
pub use network::{Hierarchy, ModelOptions, Network, Structure};
pub use report::{EpochRecord, MetricsReport, RunRecord};
