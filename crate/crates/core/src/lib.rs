//! Exact simulation and limit theory for a fixed-size population in which
//! every individual accumulates beneficial mutations.
//!
//! Each of `N` individuals mutates at rate `mu` and dies at rate one; the
//! replacement copies a parent chosen with probability proportional to the
//! fitness `max{0, 1 + s (j - M)}`, where `j` is the parent's mutation count
//! and `M` the population mean. The crate provides
//!
//! * [`model`] and [`engine`]: the state, rates and two exact event samplers;
//! * [`renewal`]: the limit curves `q` and `m` and a Monte Carlo renewal oracle;
//! * [`theory`]: the closed-form scales and predictions;
//! * [`observables`]: wave observables and martingale diagnostics;
//! * [`experiments`]: seeded ensembles, comparisons against theory and file I/O.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod experiments;
pub mod model;
pub mod observables;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod theory;

pub use engine::{run, EngineKind, EventKind, RunSchedule, Trajectory};
pub use model::{ModelError, ModelParams, PopulationState};
pub use renewal::{solve_q, TheoryCurves};
pub use theory::Scales;
