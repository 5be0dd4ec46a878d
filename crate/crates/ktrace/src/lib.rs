//! Knowledge-tracing toolkit.
//!
//! Models the mastery of skills from sequences of binary exercise outcomes:
//! the classic two-state knowledge-tracing HMM plus three extensions
//! (forgetting with gap-compounded decay, per-student latent abilities, and
//! nonparametric skill discovery over exercise labels), a desk-scale LSTM
//! sequence baseline, a synthetic student generator, and an AUC-based
//! evaluation harness for comparing them.

pub mod abilities;
pub mod artifact;
pub mod bkt;
pub mod data;
pub mod dkt;
pub mod error;
pub mod eval;
pub mod math;
pub mod skill_discovery;
pub mod synthgen;

pub use error::{Error, ErrorCategory, Result};
