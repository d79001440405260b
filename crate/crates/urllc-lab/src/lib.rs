//! Stochastic-geometry laboratory for proactive multi-cell association in
//! ultra-reliable low-latency cellular networks.
//!
//! A two-tier Poisson network is studied around a typical user that associates
//! with its `K` biased-nearest access points at once (a *virtual cell*).
//! The crate pairs closed-form and semi-analytical expressions — cell-load
//! distributions, interference Laplace transforms, non-collision and
//! communication reliabilities, bounds, and delay means — with Monte Carlo
//! estimators that validate them, plus a CLI harness that sweeps parameter
//! grids and persists plot-ready CSV data.
//!
//! Module map:
//! - [`numerics`]: quadrature, special functions, seeded random streams.
//! - [`geometry`]: Poisson point process sampling and the weighted-distance
//!   transform that reduces biased association to a 1-D process.
//! - [`association`]: virtual-cell construction, per-AP loads, RRU selection
//!   and collision detection.
//! - [`analysis`]: every closed-form/semi-analytical formula.
//! - [`shortpacket`]: finite-blocklength link budget → SIR threshold.
//! - [`fitting`]: maximum-likelihood fit of the load-model shape parameter.
//! - [`montecarlo`]: system-level and model-matched simulators with a
//!   rare-event stopping rule and deterministic parallel merging.
//! - [`experiments`]: presets, sweeps, CSV/JSON persistence, reports.

pub mod analysis;
pub mod association;
pub mod config;
pub mod experiments;
pub mod fitting;
pub mod geometry;
pub mod montecarlo;
pub mod numerics;
pub mod shortpacket;
