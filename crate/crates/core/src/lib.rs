//! Simulation-in-the-loop Bayesian optimization of an MPC shared controller
//! for a rail-mounted planar robot.

// Index loops mirror the math; negated float comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bayesopt;
pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod metrics;
pub mod report;
pub mod robot;
pub mod scenarios;
pub mod sim;
pub mod stats;
pub mod teleop;
pub mod world;

pub use error::{Error, Result};
