//! Experiment harness for the `pass-thb` library.
//!
//! The harness turns a JSON experiment description into seeded, reproducible
//! optimizer runs and persists the results as a convergence-trace CSV plus a
//! JSON summary. Everything downstream of the config is a pure function of
//! `(config, seed)`: rerunning a configuration reproduces the output files
//! byte for byte.

pub mod config;
pub mod landscape;
pub mod record;
pub mod runner;
