//! Joint hybrid precoding and combining for mmWave massive MIMO, learned end to end.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: small dense complex matrices, a Jacobi SVD and seeded random streams.
//! * [`channel`]: clustered narrowband/wideband channel generation, CSI perturbation and the
//!   binary dataset format.
//! * [`phy`]: QPSK mapping, hybrid weights and the received-signal model.
//! * [`neural`]: dense layers with batch normalisation, BCE loss, Adam and checkpoints.
//! * [`jhpf`]: the six-network hybrid processing designer, the differentiable signal flow,
//!   training and inference (including the OFDM variant).
//! * [`baselines`]: fully-digital SVD, DFT-codebook beam sweeping and random-phase controls.
//! * [`eval`]: Monte-Carlo BER sweeps, CSI/scenario mismatch suites and latency benchmarks.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod eval;
pub mod jhpf;
pub mod neural;
pub mod numerics;
pub mod phy;

pub use error::{Error, Result};
pub use numerics::{CMatrix, RngStream, C64};
