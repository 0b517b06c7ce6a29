//! Configuration, metrics output, timing and the command line.

pub mod bench;
pub mod cli;
pub mod config;
pub mod metrics;

pub use config::{DataSource, IdxSpec, RunConfig, SyntheticSpec};
pub use metrics::{emit_metrics, read_metrics, MetricsRecord, Summary, METRICS_HEADER};
