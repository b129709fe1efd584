//! Task environments.
//!
//! An [`Environment`] owns the task dynamics: initial state, legal actions,
//! transitions, terminal detection, reward, and textual rendering. Rule-based
//! tasks (Blocksworld) implement everything from rules; decomposition tasks
//! delegate action proposal and transitions to a policy model.

use thiserror::Error;

use crate::policy::PolicyError;

pub mod blocks;
pub mod decomp;
pub mod oracle;

pub use blocks::{BlocksAction, BlocksEnv, BlocksInstance, BlocksState, Goal, Predicate};
pub use decomp::{DecompAction, DecompositionEnv, DecompositionState};
pub use oracle::{generate_instances, min_plan_length, DistanceOracle, GeneratorSpec};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("goal unreachable from the given state")]
    Unsolvable,
    #[error("instance too large for the exhaustive oracle: {0} blocks (cap {1})")]
    TooLarge(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("instance generation failed: {0}")]
    Generation(String),
    #[error("policy failure: {0}")]
    Policy(#[from] PolicyError),
}

/// Behavioral contract of a task.
///
/// `apply` must be a pure function of `(state, action)` for rule-based
/// tasks, and every action returned by `legal_actions` must be accepted
/// by `apply`.
pub trait Environment {
    type State: Clone;
    type Action: Clone;

    fn initial_state(&self) -> Self::State;
    fn legal_actions(&self, state: &Self::State) -> Result<Vec<Self::Action>, EnvError>;
    fn apply(&self, state: &Self::State, action: &Self::Action) -> Result<Self::State, EnvError>;
    fn is_terminal(&self, state: &Self::State) -> bool;
    /// Reward in [0, 1] for a terminal state.
    fn terminal_reward(&self, state: &Self::State) -> f64;
    /// Canonical textual rendering used in prompts and tree dumps.
    fn render_state(&self, state: &Self::State) -> String;
    fn render_action(&self, action: &Self::Action) -> String;
}
