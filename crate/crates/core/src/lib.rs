//! Span-level hallucination detection for LLM answers.
//!
//! An answer is split into semantic-role units, each unit is checked for
//! entailment against a retrieved reference context and weighted by the
//! model's own token confidence, and flagged units become character spans.

pub mod backends;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decompose;
pub mod detect;
pub mod eval;
pub mod manifest;
pub mod scoring;
pub mod spans;
pub mod text;
pub mod verify;
