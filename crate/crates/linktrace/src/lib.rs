//! Deterministic simulator and analysis toolkit for binational link-tracing
//! sampling from two-site social fields.
//!
//! The crate covers the full pipeline of a chain-referral study that runs
//! simultaneously in a migration origin community and a destination enclave:
//!
//! 1. [`synthpop`] generates an attributed two-site-plus-elsewhere population
//!    and a ground-truth social graph with planted homophily.
//! 2. [`fieldwork`] executes the referral protocol on that graph: seed
//!    selection, name-generator elicitation, alter-alter subsampling,
//!    masking-aware referral nomination and participation draws.
//! 3. [`identity`] encodes the 3+3+4 alias scheme and links the resulting
//!    observations back into unique entities, reporting code conflicts.
//! 4. [`netbuild`] assembles the multi-layer network (referral arcs,
//!    nomination arcs, alter-alter edges) and decomposes it into seed chains.
//! 5. [`netstats`] computes descriptive statistics: density, dyad census,
//!    mixing matrices, E-I indices with permutation tests, Freeman
//!    centralizations, composition tables.
//! 6. [`ergm`] fits exponential random graph models by maximum
//!    pseudo-likelihood (edges, homophily terms, GWDSP).
//! 7. [`rdsest`] computes naive and inverse-degree-weighted population
//!    estimates plus a representativeness report.
//! 8. [`pipeline`] orchestrates end-to-end runs from a [`config::RunConfig`]
//!    and [`report`] renders a markdown study report.
//!
//! Every stage is a pure function of its inputs and an explicit RNG seed;
//! identical (config, seed) pairs produce byte-identical artifacts.

pub mod config;
pub mod ergm;
pub mod error;
pub mod fieldwork;
pub mod identity;
pub mod io;
pub mod netbuild;
pub mod netstats;
pub mod pipeline;
pub mod rdsest;
pub mod report;
pub mod rng;
pub mod synthpop;

#[doc(hidden)]
pub mod testutil;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
