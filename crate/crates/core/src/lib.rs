//! Planar simulation of a small four-wheel-drive vehicle with a two-degree-of-freedom
//! front suspension crossing a step obstacle, plus the analysis pipeline built on it:
//! full-factorial trial campaigns, per-height polynomial response surfaces, and a
//! constrained multi-objective choice of the front longitudinal damping.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the parallel campaign
//! runner and the command-line front end live in the `crossing-lab` companion crate.

#![no_std]

extern crate alloc;

pub mod contact;
pub mod doe;
pub mod error;
pub mod fitting;
pub mod math;
pub mod scenario;
pub mod strategy;
pub mod vehicle;

pub use contact::{ContactForce, ContactParams, ContactProbe, Feature, Obstacle};
pub use doe::{CampaignResult, DoePlan, Provenance, TrialFailure, TrialRecord};
pub use error::{Error, Result};
pub use fitting::{FittedSurface, Metric, Scaling, SurfaceSpec};
pub use scenario::{CrossingEvents, CrossingMetrics, Outcome, TrialConfig, TrialResult};
pub use strategy::{StrategyDecision, StrategyProblem};
pub use vehicle::{ControllerState, VehicleParams, VehicleState};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;
