//! Library behind the `socnav` command: configuration, the LLM client and
//! the data pipeline shared by all subcommands.

pub mod commands;
pub mod config;
pub mod llm;
pub mod pipeline;

pub use config::Config;
