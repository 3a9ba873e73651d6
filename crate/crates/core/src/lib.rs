//! Gradient-free distributed Nash equilibrium seeking over directed graphs.
//!
//! Players only evaluate their own cost. Each one keeps estimates of every
//! other player's action, mixes them with its in-neighbours through a
//! doubly-stochastic weight matrix, and steps along a two-point Gaussian
//! smoothing oracle.

pub mod cli;
pub mod error;
pub mod game;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod seeker;

pub use error::{Error, Result};
