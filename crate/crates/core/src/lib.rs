//! Diffusion learning with adaptive clustering over multi-task networks.
//!
//! The crate has two halves that are meant to be checked against each other:
//!
//! - a simulator ([`diffusion`]) running the coupled adapt-then-combine
//!   recursions together with the pairwise clustering test, and
//! - closed-form predictions ([`analysis`]) for the steady-state error
//!   covariance, the mean-square deviation, and the clustering error
//!   probabilities.
//!
//! [`network`], [`models`] and [`combination`] hold the shared data model.

pub mod analysis;
pub mod combination;
pub mod diffusion;
mod error;
pub mod models;
pub mod network;
pub mod rng;

pub use error::{Error, Result};
