//! Pseudorandom generator for polynomial threshold functions over Gaussian
//! space, with an exact Hermite-analysis engine and experiment suites.

pub mod battery;
pub mod error;
pub mod fooling;
pub mod gaussops;
pub mod hermite;
pub mod hyperlab;
pub mod identities;
pub mod kwise;
pub mod mc;
pub mod mollifier;
pub mod prg;
pub mod statgrid;
pub mod verify;
pub mod suite;

pub use error::{Error, Result};
pub use hermite::{HermitePoly, MultiIndex, Part};
