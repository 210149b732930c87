//! Notification-set selection for single-cycle ride-hailing dispatch.
//!
//! Riders are matched to drivers who accept independently with known
//! probabilities. A dispatcher notifies a disjoint set of drivers per rider
//! and the rider is served under first-accept (FA) or best-accept (BA)
//! contention. This crate evaluates those valuations exactly and provides
//! approximation algorithms, exact oracles and an experiment harness.

pub mod ba_multi;
pub mod baselines;
pub mod bench;
pub mod colgen;
pub mod error;
pub mod fa_multi;
pub mod fa_single;
pub mod instance;
pub mod optlib;
pub mod rng;
pub mod valuation;

pub use error::{Error, Result, Violation};
pub use instance::{
    gen_hardness, gen_uniform, Assignment, Dispatch, Instance, InstanceData, ThreePartitionSpec,
};
pub use valuation::{
    ba_value, closure_value, fa_threshold, fa_value, mnl_value, simulate, Driver, DriverView,
    Protocol, ThresholdParts, ValuationKind,
};
