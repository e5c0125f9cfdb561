//! Numerical laboratory for a radiative-reaction model of quantum
//! behaviour: stationary log-Schrödinger states, stochastic simulation,
//! transition kernels and the preacceleration-averaged force.

pub mod error;
pub mod fields;
pub mod params;
pub mod reference;
pub mod stationary;
pub mod diffusion;
pub mod kernel;
pub mod quadrature;
pub mod force;
pub mod experiments;
mod csv;
mod tridiag;

pub use error::{Error, Result};
