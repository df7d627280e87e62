//! Permutation-equivariant templates, classical resource-allocation solvers
//! and their re-expressed forms, and small equivariant graph networks.

pub mod baselines;
pub mod error;
pub mod gnn;
pub mod pe;
pub mod permutation;
pub mod rie;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tensor, Tape, Var};
