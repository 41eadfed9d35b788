//! Certified arithmetic on rational rotations of the circle, Bohr-set
//! families for recurrence and non-recurrence, and audits over them.

pub mod audit;
pub mod circle;
pub mod dirichlet;
pub mod error;
pub mod family;
pub mod klapprox;
pub mod serial;
pub mod witness;

pub use error::{Error, Result};
