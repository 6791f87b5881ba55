//! Discounted and average-cost Markov decision processes with extended-real
//! costs on finite models.
//!
//! - [`mdp`]: model, validation, JSON loading and kernel expectations.
//! - [`selection`]: value, domain and lowest-index optimal selectors of an objective.
//! - [`discounted`]: Bellman operator, value iteration and optimal policies.
//! - [`vanishing`]: vanishing-discount profiles, assumption diagnostics and the
//!   average-cost optimality inequality.
//! - [`chain`]: exact long-run average cost of a stationary policy.
//! - [`counterexample`]: a single-action MDP that satisfies the liminf bound on
//!   relative values but not the uniform one.
//! - [`sim`]: seeded trajectory simulation.

pub mod chain;
pub mod cli;
pub mod counterexample;
pub mod discounted;
pub mod error;
pub mod ext;
mod linalg;
pub mod mdp;
pub mod policy;
pub mod selection;
pub mod sim;
pub mod vanishing;

pub use error::{Error, Result};
pub use ext::ExtReal;
pub use mdp::{load_mdp, validate, Action, Mdp, TransitionRow, ValidationReport, ValueFunction};
pub use policy::{MarkovPolicy, StationaryPolicy};
