//! Dense-network numerics: matrices, forward and backward passes, losses,
//! optimizers, gradient verification and the binary model format.

pub mod format;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod train;

pub use format::{load_model, read_model, save_model, write_model};
pub use loss::{cross_entropy, mse, softmax_rows, Loss};
pub use matrix::{argmax, Matrix, Scalar};
pub use mlp::{stack, Activation, Gradients, LayerSpec, Mlp, Mode, Trace};
pub use optim::{AdamState, LrSchedule, Optimizer, OptimizerConfig};
pub use train::{fit, predict_batched, FitConfig, Targets};
