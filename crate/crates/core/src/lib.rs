//! Numerical laboratory for effective Hamiltonians and approximate correctors
//! of viscous Hamilton-Jacobi equations in random stationary media.
//!
//! The pipeline is: sample an [`environment`], build [`models`] on it, solve
//! discounted cell problems with the monotone [`scheme`] ([`solver`]), push
//! the discount to zero over a seed ensemble ([`homog`]), and study the
//! sublevel sets of the resulting effective Hamiltonian ([`geometry`]).

pub mod environment;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod homog;
pub mod models;
mod multigrid;
pub mod par;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridSpec, Vector};
