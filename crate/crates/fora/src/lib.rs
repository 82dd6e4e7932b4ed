//! Online fair allocation of a fixed budget of indivisible units.
//!
//! A fixed inventory of `K` indivisible units is rationed over `T` time
//! slots among `N` demand groups with priority weights in `(0, 1]`. At
//! most one request arrives per slot, each demanding up to `K` units, and
//! the allocator may fill any part of it immediately and irrevocably. The
//! fairness target is per group: expected total allocation at least
//! `alpha * beta_i` times expected total demand, with the best achievable
//! `alpha` governed by the priority-weighted load `R_beta`.
//!
//! The crate provides:
//!
//! - instance modeling, validation, and a JSON file format ([`model`]);
//! - the budget-distribution dynamic program that calibrates the
//!   randomized threshold policies ([`gamma`]);
//! - the online policies: calibrated thresholds for arbitrary arrivals,
//!   random cyclic blocks for time-invariant arrivals, and all-or-nothing
//!   baselines ([`policy`]);
//! - a seeded, parallel Monte Carlo harness ([`sim`]);
//! - guarantee curves, an exact enumeration oracle, hard instance
//!   generators, and upper-bound audits ([`analysis`]);
//! - CSV renderers for every report ([`report`]).

pub mod analysis;
pub mod gamma;
pub mod model;
pub mod policy;
pub mod report;
pub mod scalar;
pub mod sim;

pub use analysis::{bounds, exact_evaluate, hardgen, BoundSet, ExactOptions, ExactReport, Family};
pub use gamma::{compute_gamma, GammaTable};
pub use model::{ArrivalEvent, Instance, LoadSummary, RawInstance};
pub use policy::{Decision, Policy, PolicyKind, PolicyState};
pub use sim::{run_long_run, run_trials, EstimateReport, SimOptions};
