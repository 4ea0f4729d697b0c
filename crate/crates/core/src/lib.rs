//! Finite-sample simultaneous confidence bands for monotone and convex
//! regression functions observed in Gaussian white noise on an equispaced
//! design.
//!
//! The pipeline is: kernels and their discrete sums ([`kernels`]), the
//! multiscale scan statistic ([`multiscale`]), Monte-Carlo critical values
//! ([`critical`]), the band itself ([`bands`]) and shape-constrained
//! tightening ([`shape`]).

pub mod bands;
pub mod cli;
pub mod critical;
pub mod error;
pub mod generators;
pub mod kernels;
pub mod multiscale;
pub mod shape;

pub use bands::{indicator_band, raw_band, ConfidenceBand};
pub use critical::{
    build_table, quantile_kappa, simulate_null_statistics, CriticalValueTable, SimulationConfig,
};
pub use error::{Error, Result};
pub use kernels::{KernelSpec, ShapeClass, Side};
pub use multiscale::{combined_statistic, multiscale_statistic, GridScheme, ObservationVector};
pub use shape::{check_feasibility, postprocess, FeasibilityReport};
