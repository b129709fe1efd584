//! Tree-search framework for model-assisted planning and reasoning.
//!
//! The crate is organized around four pieces:
//!
//! - [`tree`] and [`search`]: a generic search tree plus the beam-BFS, MCTS,
//!   and single-chain procedures that run over it.
//! - [`env`]: the task-environment abstraction, a rule-based Blocksworld with
//!   an exhaustive planning oracle, and a subquestion-decomposition adapter.
//! - [`policy`]: the policy-model interface (action proposal, action scoring,
//!   next-state prediction, free-form generation), a chat-completion backend,
//!   deterministic scripted mocks, and prompt assembly with guideline
//!   injection.
//! - [`reflection`] and [`metrics`]: important-state selection from finished
//!   trees, guideline summarization and storage, and the evaluation metrics
//!   (accuracy tables, pass@n, self-consistency, iteration-accuracy AUC,
//!   bargaining profit/utility).
//!
//! Every pipeline stage is deterministic under a fixed seed and a mock
//! backend, so end-to-end runs are reproducible byte for byte.

pub mod env;
pub mod metrics;
pub mod policy;
pub mod reflection;
pub mod search;
pub mod tree;

pub use search::{beam_bfs, mcts_search, sample_chain, SearchError, SearchOutcome};
pub use tree::{MethodTag, NodeId, SearchConfig, SearchNode, SearchTree, TreeDump};
