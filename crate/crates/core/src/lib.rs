//! Query-only latent-space inversion.
//!
//! Given nothing but confidence vectors from a classifier composed with a
//! generator, an off-policy agent learns to steer random latent vectors
//! toward latents the classifier confidently assigns to a chosen class.
//!
//! - [`tensor`]: matrices, MLPs with backprop, Adam, squashed Gaussian
//! - [`mdp`]: state transition, reward terms, environment step
//! - [`agents`]: replay memory, SAC, TD3, DDPG
//! - [`oracles`]: synthetic world, query ledger, subprocess protocol
//! - [`metrics`]: attack accuracy, KNN/feature distance, density and coverage
//! - [`harness`]: experiment configuration, attack runs, sweeps, reports

pub mod agents;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod metrics;
pub mod oracles;
pub mod tensor;

pub use error::{Error, Result};
