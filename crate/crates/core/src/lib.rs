//! Quantum Fisher information for time-dependent Hamiltonians.
//!
//! The crate computes the quantum Fisher information (QFI) of a parameter
//! `g` encoded in a time-dependent Hamiltonian `H_g(t)`, synthesizes the
//! control Hamiltonian that saturates the eigenvalue-gap bound, and
//! simulates the adaptive feedback protocol that reaches `T⁴` scaling for
//! a rotating-field qubit. Units: ħ = 1, dimensionless throughout.

pub mod acceptance;
pub mod adaptive;
pub mod control;
pub mod error;
pub mod evolution;
pub mod fisher;
pub mod measurement;
pub mod operator_algebra;
pub mod qubit_example;

pub use error::{QfiError, Result};
pub use evolution::{HamiltonianFamily, SamplingRule, TimeGrid};
pub use operator_algebra::{HermitianOperator, PureState, Unitary};
