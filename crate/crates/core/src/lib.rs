//! Macroscopic observables inside finite quantum many-body systems.
//!
//! The crate builds intensive few-body sums on spin chains, partitions their
//! joint spectrum into phase cells, and studies how superpositions of states
//! from distinct cells behave under the resulting coarse observables and under
//! unitary time evolution. A closed-form Gaussian pointer model covers the
//! collective-momentum measurement picture.
//!
//! Everything is exact diagonalization on dense matrices, so system sizes are
//! capped (see [`hilbert::DEFAULT_DIMENSION_CAP`]).

pub mod cells;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod observables;
pub mod pointer;
pub mod states;

pub use error::{Error, Result};
pub use hilbert::C64;
