//! Equilibria, linear stability, simulation and Lyapunov checks for a delayed cell-population model with Hill-type feedback.

pub mod charroots;
pub mod cli;
pub mod config;
pub mod dde_sim;
pub mod error;
pub mod hayes;
pub mod lyapunov;
pub mod model;
pub mod quadrature;

pub use error::{Error, Result};
