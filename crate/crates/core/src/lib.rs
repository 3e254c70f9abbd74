//! Freeway and arterial corridor simulation with learned signal control.
//!
//! The crate is organised bottom-up:
//!
//! * [`topology`]: network data model and scenario files.
//! * [`signal`]: cycle/split/offset plans and green queries.
//! * [`sim`]: the coupled freeway cell model and arterial queue model.
//! * [`rl`]: tabular Q-learning.
//! * [`agents`]: state bins, action spaces and rewards of the two agent classes.
//! * [`coordinator`]: majority-rule plan unification.
//! * [`baselines`]: fixed-time control and bandwidth-maximizing offsets.
//! * [`metrics`]: evaluation criteria and reports.
//! * [`harness`]: training and evaluation loops.

pub mod agents;
pub mod baselines;
pub mod coordinator;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod num;
pub mod rl;
pub mod sim;
pub mod signal;
pub mod topology;

pub use error::{Error, Result};
pub use num::Scalar;

pub type QTableF64 = rl::QTable<f64>;
pub type QTableF32 = rl::QTable<f32>;
