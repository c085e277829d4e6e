//! Compiler and runtime for declarative data-curation tasks.
//!
//! A task description is compiled into a cost-minimal cascade of
//! executor modules — cache reuse, generated code ensembles, distilled
//! models, and LLM calls — that answers records cheaply when it can and
//! falls back to stronger, costlier stages when it must.

pub mod batching;
pub mod cache;
pub mod cli;
pub mod codegen;
pub mod config;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod optimizer;
pub mod prompts;
pub mod provider;
pub mod runtime;
pub mod testkit;
pub mod value;

pub use error::{Error, Result};
