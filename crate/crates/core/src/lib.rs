//! Multi-agent LLM orchestration for agile software engineering.
//!
//! Specialised agents cover sprint planning, hierarchical codebase
//! summarisation, change localisation over those summaries, code generation
//! with format/build/test validation, and peer review. The [`orchestrator`]
//! wires them into a generation phase (new application from a task) and an
//! augmentation phase (feature request against an existing codebase).

pub mod http;
pub mod money;
pub mod provider;
pub mod tokens;
pub mod llm;
pub mod fsutil;
pub mod index;
pub mod planner;
pub mod localizer;
pub mod supervisor;
pub mod developer;
pub mod review;
pub mod integrations;
pub mod orchestrator;
pub mod cli;
