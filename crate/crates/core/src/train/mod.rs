//! Training and evaluation: the one-step MSE objective, ADAM with a stepped
//! learning-rate decay, autoregressive rollouts, rollout metrics, and the
//! scaling/generalisation benchmark harnesses.

pub mod adam;
pub mod bench;
pub mod loss;
pub mod metrics;
pub mod rollout;
pub mod trainer;

pub use adam::{AdamState, StepOutcome, TrainConfig};
pub use bench::{generalisation_eval, log_log_slope, scaling_bench, BenchRow, BenchTable, GenRow};
pub use loss::{one_step_loss_plain, one_step_loss_t};
pub use metrics::{
    energy_error, evaluate, rollout_rmse, EnergyError, EvalReport, TauMetrics, TauSummary,
    TrajEval,
};
pub use rollout::{rollout_model, rollout_oracle, rollout_with, RolloutOutcome};
pub use trainer::{train, CurvePoint, TrainResult};
