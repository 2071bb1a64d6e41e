//! Dense numeric substrate for the agents: row-major matrices, small
//! feed-forward networks with hand-written backprop, Adam, and the
//! tanh-squashed Gaussian used by the stochastic policy.

mod adam;
mod matrix;
mod mlp;
mod squash;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardTrace, Mlp, MlpGradients};
pub use squash::{squashed_gaussian_backward, squashed_gaussian_sample, SquashedSample, LOG_STD_MAX, LOG_STD_MIN};
