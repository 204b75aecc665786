//! A small from-scratch layer library: convolution, pooling, dense,
//! activations, dropout, cross-entropy, and SGD with momentum, plus a
//! finite-difference gradient checker.

mod gradcheck;
mod layer;
mod loss;
mod optim;
mod sequential;

pub use gradcheck::{gradient_check, gradient_check_widened, Differentiable, GradCheckReport};
pub use layer::{Cache, Conv2d, Dense, Layer, LayerSpec, ParamGrads};
pub use loss::{cross_entropy_loss, one_hot};
pub use optim::{sgd_momentum_step, OptimizerState, SgdConfig};
pub use sequential::Sequential;
