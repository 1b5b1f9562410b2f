//! Dense complex linear algebra and reproducible random streams.
//!
//! Everything here is sized for the simulator: matrices are at most a few dozen rows and
//! columns, so the implementations favour accuracy and clarity over blocking tricks.

mod cmatrix;
mod rng;
mod svd;

pub use cmatrix::{frob_norm, CMatrix, C64};
pub use rng::{sample_cn, RngStream};
pub use svd::{svd_compact, Svd};
