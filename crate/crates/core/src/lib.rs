//! Heat kernel transforms on the Heisenberg group and its standard nilmanifold.

pub mod error;
pub mod bergman;
pub mod heat_transform;
pub mod heisenberg;
pub mod hermite;
pub mod nilmanifold;
pub mod numerics;

pub use error::{Error, Flagged, Result, Warning};
pub use num_complex::Complex64 as C64;
