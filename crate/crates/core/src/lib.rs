//! Lattice discretization and equivariant variational solver for the critical
//! p-Laplace equation `-Delta_p u = |u|^{p*-2} u` in `R^N`.

pub mod bubble;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod grid;
pub mod io;
pub mod solver;
pub mod symmetry;

pub use error::{Error, Result};
