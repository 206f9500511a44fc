//! HTTP service and command-line front ends for the infomorph engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
