//! Information-bottleneck reward modelling on a synthetic preference world:
//! reward models, latent outlier detection, an exact-gradient policy
//! simulator and pessimistic-reward checks.

pub mod detector;
pub mod error;
pub mod nnkit;
pub mod numkit;
pub mod pipeline;
pub mod pessimism;
pub mod rewardmodels;
pub mod rlsim;
pub mod seeding;
pub mod synthworld;

pub use error::{Error, Result};
