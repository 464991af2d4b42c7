//! Library side of the `dzpbc` command-line tool: scenario documents,
//! metrics files, and the subcommand implementations.

pub mod commands;
pub mod document;
pub mod output;
