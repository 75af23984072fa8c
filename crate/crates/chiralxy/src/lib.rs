//! Antiferromagnetic XY model on the triangular lattice.
//!
//! Spin fields are stored as lifted angles on integer lattice indices. The
//! crate evaluates energies and chiralities, solves the boundary-pinned cell
//! problem for the chirality surface tension, certifies the elementary
//! trigonometric estimates, and runs the constructive procedures (chains,
//! one-dimensional interpolation, boundary enforcement, paving).

pub mod analysis;
pub mod error;
pub mod lattice;
pub mod optimize;
pub(crate) mod par;
pub mod recovery;
pub mod spin;

pub use error::{Error, Result};
