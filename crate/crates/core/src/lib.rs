//! Content-caching simulation lab: synthetic Zipf request traces, a slot-based
//! cache simulator, classic replacement baselines and learned replacement
//! agents (a Wolpertinger actor-critic and a DQN), plus an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod cache;
pub mod dqn;
pub mod error;
pub mod features;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod reward;
pub mod trace;
pub mod wolpertinger;

pub use error::{Error, Result};
