#![no_std]

//! Service-deferral policies for a slotted system with Bernoulli request
//! arrivals, quadratic service costs, quadratic waiting costs and a two-slot
//! deadline.
//!
//! Each request brings `psi` units of work; a fraction of it may be pushed to
//! the next slot, where it has to be finished. The crate provides:
//!
//! - closed-form optimal and symmetric Nash deferral policies ([`policy`]),
//! - a discretized value-iteration oracle and the piecewise-affine solver for
//!   heterogeneous demands ([`bellman`]),
//! - a seeded slot-level simulator ([`sim`]),
//! - arrival-probability estimation and cost-gap bounds ([`estimation`]).
//!
//! Everything here is `no_std` with `alloc`; file formats and the command line
//! live in the `deferral` crate.

extern crate alloc;

pub mod bellman;
pub mod error;
pub mod estimation;
pub mod params;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use params::{GeneralModelParams, ModelParams};
pub use policy::{AffinePolicy, DeferralPolicy, NashCoefficients, OptimalCoefficients};
