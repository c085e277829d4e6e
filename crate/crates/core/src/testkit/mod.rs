//! Deterministic fixtures for exercising the full system without any
//! external services: synthetic optimizer instances with exhaustive
//! oracles, a demo table catalog wired into the tool registry, and
//! scripted workload/provider generators.

pub mod synthetic;
pub mod tables;
pub mod workload;
