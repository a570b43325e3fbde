//! Group-relative policy optimization on a synthetic tool-use environment.

pub mod curriculum;
pub mod env;
pub mod objective;
pub mod train;

pub use curriculum::{schedule_cases, schedule_order, Strategy};
pub use env::{rollout, EnvConfig, Rollout, SimQuery};
pub use objective::{
    batch_gradient, batch_objective, clipped_term, group_advantages, kl_categorical, log_softmax, softmax, policy_step,
    surrogate_objective, ObjectiveParams, PolicyState, TrajectoryGroup,
};
pub use train::{train, PolicyMetrics, StepMetrics, TrainConfig, TrainingReport};
