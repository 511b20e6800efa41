//! Differentiable classifier core: dense MLP and graph-convolution models
//! with explicit forward traces, exact reverse-mode gradients, Xavier
//! initialization, and SGD/AdamW optimizers. All arithmetic is `f64`.

mod backward;
mod forward;
mod gradcheck;
mod init;
mod matrix;
mod model;
mod optim;

pub use backward::backward;
pub use forward::{forward, forward_gcn, forward_mlp, ForwardTrace, ModelInput};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckOptions, GradCheckReport};
pub use init::xavier_init;
pub use matrix::DenseMatrix;
pub use model::{Activation, ArchitectureSpec, Layer, ModelKind, ModelParams};
pub use optim::{apply_update, OptimizerConfig, OptimizerKind, OptimizerState};

#[cfg(test)]
mod tests;
