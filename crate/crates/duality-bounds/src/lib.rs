//! Certified upper bounds for compact quadratically constrained quadratic
//! programs (QCQPs) built from toy linear wave-scattering models.
//!
//! The library builds small dense scattering instances, generates the
//! quadratic equality constraints their physics must satisfy, minimizes the
//! convex Lagrangian dual to obtain a bound, certifies strong duality from
//! the constraint residuals at the dual maximizer, and, when a gap is
//! suspected, modifies the objective source term until the bound closes.

pub mod constraints;
pub mod dual;
pub mod error;
pub mod io;
pub mod linalg;
pub mod refine;
pub mod scattering;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{C64, CMatrix, CVector, QuadraticForm};
