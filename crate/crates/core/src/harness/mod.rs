//! Synthetic scenarios, Monte Carlo oracles, hyperparameter search and the
//! end-to-end pipeline.

pub mod config;
pub mod oracle;
pub mod pipeline;
pub mod scenario;
pub mod search;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, write_synthetic, PipelineOutput};
pub use scenario::{generate, Conditional, Scenario, SyntheticData, TruthRow};
