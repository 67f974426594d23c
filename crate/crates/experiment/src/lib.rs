//! Configuration, data loading and the experiment runner around
//! `bpfl-core`.

pub mod config;
pub mod data;
pub mod idx;
pub mod runner;
