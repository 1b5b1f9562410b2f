//! Monte-Carlo BER sweeps, CSI-mismatch experiments and design-latency measurements.

mod bench;
mod curve;
mod sweep;

pub use bench::{latency_bench, LatencyRow};
pub use curve::{BerCurve, BerPoint, CSV_HEADER};
pub use sweep::{ber_sweep, mismatch_suite, ChannelSource, CsiCondition, Scheme, SweepConfig};
