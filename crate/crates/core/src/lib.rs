//! Optimal dosing of a cytotoxic drug in a Cahn-Hilliard-Brinkman tumour
//! growth model: forward solver, exact discrete adjoint and projected
//! gradient optimization on a 2-D staggered grid.

// `!(x > 0.0)` rejects NaN as well; stencil loops index several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod app;
pub mod discretization;
pub mod error;
pub mod forward;
pub mod linsolve;
pub mod objective;
pub mod optimize;
pub mod potentials;
pub mod sensitivity;
pub mod verification;

pub use error::{ChbError, Result};
