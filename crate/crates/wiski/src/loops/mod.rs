//! Streaming experiment drivers: online regression and classification loops,
//! Bayesian optimization, active learning, synthetic data, and the timing
//! benchmark.

pub mod active;
pub mod bayesopt;
pub mod bench;
pub mod data;
pub mod objectives;
pub mod stream;

pub use active::{active_learning_run, nipv_acquire, AlStrategy, AlTrace};
pub use bayesopt::{bayes_opt_loop, ucb_acquire, BoTrace, SurrogateKind};
pub use bench::{bench_timing, BenchMeasure, BenchRow};
pub use data::{standardize, ClassificationDataset, FieldDataset, RegressionDataset};
pub use objectives::{ObjectiveKind, TestObjective};
pub use stream::{
    stream_classification, stream_regression, ExactRegressor, MetricsRow, ModelKind,
    OnlineRegressor, StreamConfig, WiskiRegressor,
};
