//! Feature-driven social network simulation.
//!
//! Nodes carry an age feature and a social DNA (sDNA) describing whom they
//! prefer to connect with. Pair scores mixing preferential attachment and
//! homophily decide which pairs become edges; an SI epidemic then runs on
//! the resulting network. The crate also extracts network patterns, compares
//! them by Jensen–Shannon divergence, and fits sDNA to a target degree
//! distribution.

pub mod commands;
pub mod epidemic;
pub mod error;
pub mod featuregen;
pub mod netgen;
pub mod netmetrics;
pub mod optimizer;
pub mod pipeline;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
