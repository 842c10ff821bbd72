//! Discrete-time simulator for overcollateralized lending markets.
//!
//! The crate models a single borrowable asset market (pooled and curated
//! supply), a multi-asset market with per-curator allocation matrices, the
//! online learners that drive curated supply, and the hindsight benchmarks
//! used to measure regret, dynamic regret and competitive ratio.
//!
//! Module map:
//! - [`model`]: loan events, market state transitions, revenue ledger.
//! - [`demand`]: adversarial and stochastic loan generators plus tail validators.
//! - [`learners`]: projected gradient steps, simplex mirror descent, bound formulas.
//! - [`pricing`]: pooled and curated engines, fixed and variable interest.
//! - [`multi`]: borrowable-asset x collateral markets and mirror-descent curators.
//! - [`metrics`]: hindsight benchmarks, regret reports, scaling-law fits.
//! - [`harness`]: scenario configuration, runs, sweeps and reproduction tables.

pub mod demand;
pub mod error;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod model;
pub mod multi;
pub mod num;
pub mod pricing;

pub use error::{Error, Result};
