//! Dense MLP numerics: parameters, forward/backward passes, Adam and the
//! categorical policy head. Everything is `f64`.

mod adam;
mod categorical;
mod dense;
mod matrix;
mod params;

pub use adam::{adam_step, OptState, BETA1, BETA2, EPSILON};
pub use categorical::{categorical_head, Categorical};
pub use dense::{backward, forward, forward_rows, forward_tape, Tape};
pub use matrix::Matrix;
pub use params::{Gradients, Layer, NetParams};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer list needs at least an input and an output size")]
    EmptyLayers,
    #[error("layer sizes must be positive")]
    ZeroSize,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tape does not belong to these parameters: {0}")]
    StaleTape(String),
    #[error("non-finite values in network input or parameters")]
    NonFinite,
    #[error("non-finite gradient (diverged loss)")]
    NonFiniteGradient,
    #[error("malformed parameter document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
