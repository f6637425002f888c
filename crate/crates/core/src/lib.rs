//! Median-of-means (MoM) estimation of means, uniformly over function classes,
//! for heavy-tailed data with only `p ∈ (1, 2]` finite moments.
//!
//! The crate is organised by concern:
//!
//! - [`estimator`]: the MoM estimator itself, the lower-middle median and
//!   blocked-sample bookkeeping.
//! - [`tail_models`]: seeded heavy-tailed samplers with analytic moments.
//! - [`planner`]: closed-form sample-size schedules, evaluated in log space.
//! - [`function_classes`]: normalized k-means losses, regression losses and
//!   the modulus of continuity.
//! - [`geometry_nets`]: Euclidean ball nets and empirical-L1 nets.
//! - [`harness`]: Monte Carlo campaigns checking the probabilistic bounds.

pub mod error;
pub mod estimator;
pub mod function_classes;
pub mod geometry_nets;
pub mod harness;
pub mod planner;
pub mod quadrature;
pub mod tail_models;

pub use error::{Error, Result};
pub use estimator::{block_mean, median, mom, partition, BlockedSample, EstimateResult};
pub use planner::{LemmaConstants, Plan, PlanRequest};
pub use tail_models::{DistributionSpec, MomentInfo};
