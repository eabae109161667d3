//! AC optimal power flow toolkit: a primal-dual interior-point reference
//! solver, harvesting of solver iterates into training pairs, and a learned
//! fixed-point iterator that replaces the Newton step with a small
//! feed-forward network.

pub mod acopf;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod learned;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
