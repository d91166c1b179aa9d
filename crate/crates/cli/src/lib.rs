//! Configuration, experiments and artifact writers for the `tcpolicy` binary.

pub mod commands;
pub mod config;
pub mod output;
