//! Command-line harness: experiment pipelines, result tables and the
//! external-agent server.

pub mod commands;
pub mod report;
pub mod serve;
