//! Probability distributions over variable-order attributed graph spaces and branching tree
//! spaces: exact enumeration, Gibbs and template models, Metropolis-Hastings sampling,
//! stochastic-approximation fitting, and brute-force checks of projection-family axioms.

pub mod error;
pub mod family;
pub mod graph;
pub mod iso;
pub mod learn;
pub mod mcmc;
pub mod model;
pub mod structure;
pub mod trees;

pub use error::{Error, Result};
