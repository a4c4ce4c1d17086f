//! Deterministic dense-network engine: matrices, layers, losses, Adam and
//! finite-difference gradient checking. All arithmetic is `f64`.

mod adam;
mod gradcheck;
mod layer;
mod loss;
mod matrix;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, CheckLoss, GradCheckReport};
pub use layer::{
    sigmoid, Activation, BatchNormState, DenseLayer, LayerSpec, BATCH_NORM_EPS,
    BATCH_NORM_MOMENTUM,
};
pub use loss::{bce_loss, mse_loss, BCE_CLAMP};
pub use matrix::{mac_counter, Matrix};
pub use net::{ForwardCache, Gradients, LayerGrads, MlpNet, Mode};
