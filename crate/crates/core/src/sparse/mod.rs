//! Compressed sparse column storage, fill-reducing ordering, and an
//! up-looking LDLᵀ factorization for symmetric quasi-definite systems.

mod csc;
mod ldl;
mod ordering;

pub use csc::{CscMatrix, PatternAssembler};
pub use ldl::{Inertia, LdlFactor, LdlSymbolic};
pub use ordering::minimum_degree;
