//! Command-line front end: configuration, orchestration and report files.

pub mod commands;
pub mod config;
pub mod error;
