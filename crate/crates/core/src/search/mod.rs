//! Search procedures over task environments: beam breadth-first search,
//! Monte Carlo tree search, and a single greedy chain.
//!
//! All three produce a [`SearchTree`] plus the best root-to-leaf path, so
//! downstream consumers (reflection, metrics, replay) treat them
//! uniformly.

use thiserror::Error;

use crate::env::EnvError;
use crate::policy::PolicyError;
use crate::tree::{ConfigError, NodeId, SearchTree, TreeError};

mod bfs;
mod chain;
mod mcts;

pub use bfs::beam_bfs;
pub use chain::sample_chain;
pub use mcts::mcts_search;

#[derive(Debug, Error)]
pub enum SearchError {
    /// The root is non-terminal but offers no actions to expand.
    #[error("search frontier is empty")]
    EmptyFrontier,
    #[error("node {0} has no children to select from")]
    NoChildren(NodeId),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// One backpropagation update: `value` was folded into `node` during
/// `iteration`. Recorded in order, these events let an external ledger
/// reconstruct every visit count and value estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEvent {
    pub iteration: usize,
    pub node: NodeId,
    pub value: f64,
}

/// Result of one search run.
pub struct SearchOutcome<S, A> {
    pub tree: SearchTree<S, A>,
    /// Node ids from the root to the chosen leaf, inclusive.
    pub best_path: Vec<NodeId>,
    pub final_state: S,
    /// Backpropagation history; empty for procedures that do not
    /// backpropagate.
    pub value_events: Vec<ValueEvent>,
}

/// Leaf with the highest value estimate; ties go to the lowest id.
pub(crate) fn best_leaf<S, A>(tree: &SearchTree<S, A>) -> NodeId {
    tree.leaves()
        .max_by(|a, b| {
            a.v_estimate
                .partial_cmp(&b.v_estimate)
                .unwrap()
                .then(b.id.cmp(&a.id))
        })
        .map(|n| n.id)
        .expect("a tree always has at least one leaf")
}
