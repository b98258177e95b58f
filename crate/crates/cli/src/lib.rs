//! Library behind the `livepaper` binary: configuration loading, the
//! scenario script language and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod expect;
pub mod script;
