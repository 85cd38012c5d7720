//! Two-stage stochastic DG siting and sizing on three-phase unbalanced
//! distribution feeders, solved by learning a separable piecewise-linear
//! convex approximation of the expected recourse cost from sampled
//! second-stage duals.
//!
//! Module map:
//! - [`pwl`]: coordinate functions, slope updates and isotone projection
//! - [`mpif`]: model builder and solver backends (LP, QP, MIP)
//! - [`gridmodel`]: feeder data and the second-stage OPF models
//! - [`scenarios`]: history ingestion and scenario generation
//! - [`master`]: first-stage models (lambda and epigraph encodings), cuts
//! - [`engine`]: the learning loop
//! - [`bounds`]: statistical lower and upper bounds
//! - [`oracle`]: extensive form, grid enumeration, full simulation

pub mod bounds;
pub mod engine;
pub mod error;
pub mod gridmodel;
pub mod master;
pub mod mpif;
pub mod oracle;
pub mod parallel;
pub mod pwl;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
