//! Experiment runner for mean-field particle systems.
//!
//! The numerics live in [`meanfield_core`]. This crate adds the `meanfield`
//! binary around them, with TOML configuration and CSV/JSON reports.

// `!(x > 0.0)` rejects NaN along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;
pub mod verify;

pub use meanfield_core as core;
