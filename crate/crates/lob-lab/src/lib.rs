//! Numerical laboratory for a discrete-time limit-order-book game driven by
//! a Gaussian fundamental price: closed-form posting objectives, backward
//! construction of the equilibrium (with endogenous-liquidity-crisis
//! detection as the trading frequency rises), frequency/drift sweeps, a
//! Monte Carlo exchange that verifies optimality, and tail estimates for the
//! underlying Ito-increment bounds.

pub mod cli;
mod error;
pub mod gauss;
pub mod output;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod sweep;
pub mod tails;

pub use error::Error;
pub use gauss::{GaussianIncrement, MaximizerResult};
pub use solver::{solve_full, EquilibriumPath, ModelParams};
