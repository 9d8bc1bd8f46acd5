//! Numerical core for interface-localized wave packets in Kerr media.
//!
//! The crate computes guided modes of the TM interface problem, the NLS
//! coefficients and correctors of the wave-packet expansion, evaluates the
//! Maxwell residual of the resulting ansatz, and time-steps the full 2D
//! quasilinear system. It only needs `alloc`; the `std` feature is on by
//! default and merely switches the math backends to the platform ones.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ansatz;
pub mod banded;
pub mod correctors;
pub mod eigensolver;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod maxwell2d;
pub mod nls;
pub mod profile;
pub mod stagger;

pub use error::{Error, Result};
pub use grid::{Grid1D, Grid2D};
pub use profile::{PiecewiseProfile, Side, SideFn};

pub use num_complex::Complex64;

#[allow(unused_imports)]
mod prelude {
    pub use alloc::boxed::Box;
    pub use alloc::format;
    pub use alloc::string::{String, ToString};
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    #[cfg(not(feature = "std"))]
    pub use num_traits::Float;
}
