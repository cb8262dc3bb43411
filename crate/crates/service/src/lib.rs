//! HTTP API and command-line front end over the indicator platform.

pub mod api;
pub mod cli;
pub mod config;
