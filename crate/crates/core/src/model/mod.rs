//! Flat parameters, the dense classifier and client-side optimizers.

mod mlp;
mod optim;
mod params;

pub use mlp::{evaluate_batch, forward_loss_grad, init_model, Activation, Batch, EvalTally, ModelSpec};
pub use optim::{
    adam_step, sgd_step, AdamState, LocalOptimizer, LocalOptimizerConfig, NonFiniteGradient,
    OptimizerKind,
};
pub use params::ParameterVector;
