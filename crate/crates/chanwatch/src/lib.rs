//! IO side of chanwatch: configuration files, message stores, source
//! adapters, language-model clients, delivery sinks and the pipeline driver.
//! The pure logic lives in `chanwatch-core`.

pub mod cli;
pub mod config;
pub mod llm;
pub mod pipeline;
pub mod schedule;
pub mod sink;
pub mod source;
pub mod store;

pub use chanwatch_core as core;
