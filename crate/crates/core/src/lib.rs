//! Noncommutative quadratic polynomials, completely positive maps and
//! matrix S-lemma certificates.

pub mod cpmap;
pub mod error;
pub mod io;
pub mod linalg;
pub mod ncpoly;
pub mod positivity;
pub mod sdp;
pub mod slemma;

pub use error::{Error, Result};
