//! An embeddable deterministic in-memory transaction engine.
//!
//! Batches of transactions run through a five-phase pipeline — conflict
//! prediction, snapshot execution, validation/commit, multi-version fallback,
//! and epoch garbage collection. Prediction uses a learned tree model over
//! attribute distributions ([`aspn`]); validation uses a matrix two-pass
//! forward scan that reorders read-after-write dependencies and aborts only
//! inevitable-cycle participants ([`mtfs`]). Reference protocols ([`baselines`]),
//! synthetic workloads ([`workloads`]), and an independent brute-force
//! correctness oracle ([`oracle`]) round out the crate.

pub mod aspn;
pub mod baselines;
pub mod engine;
pub mod error;
pub mod model;
pub mod mtfs;
pub mod oracle;
pub mod store;
pub mod workloads;

pub use error::{Error, Result};
