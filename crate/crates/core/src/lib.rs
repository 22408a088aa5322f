//! Simulation engine for adaptive lending pools.
//!
//! The market model generates borrow demand and lender supply from linear
//! curves whose parameters drift over time; controllers set the interest
//! rate from online estimates of those curves (or from a fixed utilization
//! curve), and a separate solver sets the collateral factor from the
//! collateral price volatility.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod commands;
pub mod controllers;
pub mod data;
pub mod error;
pub mod estimators;
pub mod market;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
