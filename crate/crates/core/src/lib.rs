//! Exploration-coverage laboratory: a deterministic household text world,
//! checkpoint coverage scoring, small trainable policies, a group-relative
//! policy-gradient trainer and an explore-then-act evaluation protocol.

pub mod checkpoints;
pub mod diagnostics;
pub mod error;
pub mod eta;
pub mod grpo;
pub mod io;
pub mod knowledge;
pub mod observe;
pub mod par;
pub mod policies;
pub mod rng;
pub mod variants;
pub mod world;

pub use error::{Error, Result};
