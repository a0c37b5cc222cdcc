//! Conversational agent runtime with dual working memory.
//!
//! The crate is organised bottom-up:
//!
//! * [`tools`] registers the twelve real-estate tools and executes them
//!   against a fixture store.
//! * [`llm`] holds model backends and the step-grammar parser.
//! * [`memory`] and [`retrieval`] implement working memory and example recall.
//! * [`prompt`] assembles task inference prompts for the five frameworks.
//! * [`controller`] runs the perceive, plan, act loop for one query.
//! * [`dataset`] and [`eval`] build training data and score runs.
//! * [`service`] exposes sessions over HTTP; [`cli`] wires everything into the
//!   `raise` binary.

pub mod cli;
pub mod config;
pub mod controller;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod llm;
pub mod memory;
pub mod prompt;
pub mod retrieval;
pub mod service;
pub mod tools;

pub use error::{Error, Result};
