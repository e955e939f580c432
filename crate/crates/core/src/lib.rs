//! Numerical laboratory for zero-sum two-player stochastic differential games
//! whose payoffs are given by backward SDEs.
//!
//! The crate computes lower and upper value fields on discrete-noise trees,
//! checks the dynamic programming identity and the sublinear-expectation
//! inequalities the theory predicts, and cross-validates game values against
//! a finite-difference solver for the Markovian Isaacs equation.

pub mod error;
pub mod grid;
pub mod problem;
pub mod sde;
pub mod bsde;
pub mod hamiltonian;
pub mod sublinear;
pub mod game;
pub mod pde_oracle;
pub mod problems;
pub mod experiment;
mod quadrature;

pub use error::{Error, Result};
