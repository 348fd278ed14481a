//! Span-level ensembling for extractive question answering.
//!
//! The pipeline reads per-system scored candidate spans, optionally
//! calibrates scores per system, collapses duplicate spans within a system
//! ([`aggregate`]), fuses systems by a zero-filled mean ([`fuse`]), scores
//! the result with exact-match long/short answer F1 ([`metrics`]) and
//! searches for good subsets of systems ([`search`]).

pub mod aggregate;
pub mod calibrate;
pub mod error;
pub mod exec;
pub mod fuse;
pub mod ingest;
pub mod metrics;
pub mod search;
pub mod span;
pub mod synth;

pub use error::{Error, Result};
pub use span::{AnswerType, Candidate, ExampleId, Span, SystemId};
