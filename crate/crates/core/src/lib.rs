//! Entanglement detection for two-mode bosonic states via moment-matrix
//! determinants.
//!
//! The library builds matrices of creation/annihilation moments on a
//! partially transposed two-mode state, enumerates determinant criteria,
//! propagates measurement error through the determinant, and simulates the
//! measurement process itself.  A negative determinant certifies that the
//! state has a negative partial transpose and is therefore entangled.

pub mod criteria;
pub mod family;
pub mod fock;
pub mod index;
pub mod linalg;
pub mod loss;
pub mod sampler;
pub mod snapshot;
pub mod stats;

mod error;

pub use error::{Error, Result};
