//! Verification harness: scaling laws, pathwise comparison of the full and
//! reduced dynamics, exit-time Monte Carlo and the spectral gap.

mod compare;
mod exit;
mod gap;
mod scaling;
mod seeds;
pub mod stats;

pub use compare::{compare_paths, CompareReport, CompareRow, CompareSpec, StrideIncrement};
pub use exit::{exit_time_mc, fit_thresholds, ExitSpec, ExitStats, ReplicaOutcome, THRESHOLD_FACTOR};
pub use gap::{spectral_gap, GapEstimate};
pub use scaling::{scaling_suite, ScalingReport, ScalingRow, SCALING_TARGETS};
pub use seeds::derive_seed;
