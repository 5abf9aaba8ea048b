//! Positive-unlabeled reward learning.
//!
//! The numeric core ([`diffnet`], [`purisk`]) is generic over [`Scalar`]; the
//! aliases below fix it to `f64`, which is what the environments, agents and
//! reward-learning driver use.

pub mod agents;
pub mod diffnet;
pub mod envs;
pub mod error;
pub mod purisk;
pub mod rewardlearn;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{sigmoid, softplus, Scalar};

/// Network parameters in double precision.
pub type Mlp = diffnet::Mlp<f64>;
/// Network parameters in single precision.
pub type Mlp32 = diffnet::Mlp<f32>;
pub type Gradient = diffnet::Gradient<f64>;
pub type AdamState = diffnet::AdamState<f64>;
pub type AdamConfig = diffnet::AdamConfig<f64>;
pub type ClassPrior = purisk::ClassPrior<f64>;
pub type SlackBeta = purisk::SlackBeta<f64>;
pub type RiskBreakdown = purisk::RiskBreakdown<f64>;
