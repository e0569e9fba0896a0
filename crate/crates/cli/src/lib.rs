//! Command-line orchestration of hplmm runs.

pub mod cli;
pub mod config;
pub mod runner;
