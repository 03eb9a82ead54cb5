//! Reconstruction metrics and batch reporting.

pub mod benchmark;
pub mod metrics;

pub use benchmark::{benchmark, BenchmarkConfig, BenchmarkTable};
pub use metrics::{chamfer, evaluate_pair, normal_consistency, ChamferOrder, MetricReport};
