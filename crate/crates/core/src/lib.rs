//! Unimodular lattices under diagonal flows.
//!
//! Sup-norm systoles, Dirichlet improvability, equidistribution experiments
//! and an explicit segment of Dirichlet-improvable vectors in dimension 3.

pub mod counterexample;
pub mod diophantine;
pub mod equidist;
pub mod error;
pub mod flows;
pub mod lattice;
pub mod matrix;
pub mod real;

pub use error::{Error, Result};
pub use lattice::{Lattice, ShortVector};
pub use matrix::Mat;
pub use real::Real;
