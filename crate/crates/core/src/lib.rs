//! Pool-based active learning for linear regression: greedy sampling
//! strategies, a ridge learner, an evaluation harness and the statistics
//! used to compare strategies.

pub mod dataset;
pub mod experiment;
pub mod harness;
pub mod model;
pub mod samplers;
pub mod stats;

pub use dataset::Dataset;
pub use model::{ModelConfig, RidgeModel};
pub use samplers::{PoolState, Sampler, StrategyConfig, StrategyKind};
