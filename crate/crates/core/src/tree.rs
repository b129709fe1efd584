//! Search tree data structures and their serialized interchange form.
//!
//! A [`SearchTree`] is an arena of [`SearchNode`]s indexed by [`NodeId`].
//! Trees are strict: every non-root node has exactly one parent and one
//! incoming action, and `v_estimate` of a node always equals `q_estimate`
//! of its incoming action (deterministic-transition identity).
//!
//! Trees serialize to [`TreeDump`], a render-string form that downstream
//! consumers (reflection, replay) read without knowing the task types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside its tree's arena.
pub type NodeId = usize;

/// Which search procedure produced a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodTag {
    Bfs,
    Mcts,
    Chain,
}

/// Tunables shared by all search procedures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of states kept per depth in beam BFS.
    pub beam_width: usize,
    /// Maximum search depth (actions along a path).
    pub depth_limit: usize,
    /// Number of select/expand/evaluate/backpropagate cycles in MCTS.
    pub mcts_iterations: usize,
    /// UCT exploration constant `c`.
    pub exploration_constant: f64,
    /// Rollout depth for MCTS leaf evaluation; 0 evaluates leaves by their
    /// initial policy estimate instead of a rollout.
    pub rollout_depth: usize,
    /// Sample count for the label-frequency scoring fallback.
    pub samples_per_action_score: usize,
    /// Sampling temperature forwarded to the policy backend.
    pub temperature: f64,
    /// Seed for every random choice made during a run.
    pub random_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: 5,
            depth_limit: 10,
            mcts_iterations: 10,
            exploration_constant: 1.0,
            rollout_depth: 0,
            samples_per_action_score: 10,
            temperature: 0.7,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("search config field `{0}` must be >= 1")]
    ZeroCount(&'static str),
    #[error("exploration_constant must be >= 0, got {0}")]
    NegativeExploration(f64),
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.beam_width == 0 {
            return Err(ConfigError::ZeroCount("beam_width"));
        }
        if self.mcts_iterations == 0 {
            return Err(ConfigError::ZeroCount("mcts_iterations"));
        }
        if self.samples_per_action_score == 0 {
            return Err(ConfigError::ZeroCount("samples_per_action_score"));
        }
        if self.exploration_constant < 0.0 {
            return Err(ConfigError::NegativeExploration(self.exploration_constant));
        }
        Ok(())
    }
}

/// A single explored state with the bookkeeping the search procedures need.
#[derive(Debug, Clone)]
pub struct SearchNode<S, A> {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub incoming_action: Option<A>,
    pub state: S,
    pub children: Vec<NodeId>,
    /// Q(s,a) of the incoming action; mirrors `v_estimate`.
    pub q_estimate: f64,
    /// V(s); running mean of the prior estimate and all propagated values.
    pub v_estimate: f64,
    /// The policy's initial estimate; first sample of the running mean.
    pub prior_estimate: f64,
    /// Sum of values propagated through this node by backpropagation.
    pub value_sum: f64,
    pub visit_count: u32,
    pub is_terminal: bool,
}

/// Arena-backed search tree.
#[derive(Debug, Clone)]
pub struct SearchTree<S, A> {
    pub nodes: Vec<SearchNode<S, A>>,
    pub root_id: NodeId,
    pub method: MethodTag,
    pub config: SearchConfig,
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("node {0} not found")]
    UnknownNode(NodeId),
    #[error("tree invariant violated: {0}")]
    Invalid(String),
}

impl<S, A> SearchTree<S, A> {
    pub fn new(method: MethodTag, config: SearchConfig, root_state: S, root_terminal: bool) -> Self {
        let root = SearchNode {
            id: 0,
            parent: None,
            incoming_action: None,
            state: root_state,
            children: Vec::new(),
            q_estimate: 0.0,
            v_estimate: 0.0,
            prior_estimate: 0.0,
            value_sum: 0.0,
            visit_count: if method == MethodTag::Mcts { 0 } else { 1 },
            is_terminal: root_terminal,
        };
        Self {
            nodes: vec![root],
            root_id: 0,
            method,
            config,
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&SearchNode<S, A>, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut SearchNode<S, A>, TreeError> {
        self.nodes.get_mut(id).ok_or(TreeError::UnknownNode(id))
    }

    /// Appends a child under `parent` with the given initial estimate.
    ///
    /// The estimate seeds `q`, `v`, and the prior; MCTS children start
    /// unvisited while BFS/chain nodes count their single scoring query
    /// as one visit.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        action: A,
        state: S,
        prior: f64,
        is_terminal: bool,
    ) -> Result<NodeId, TreeError> {
        if parent >= self.nodes.len() {
            return Err(TreeError::UnknownNode(parent));
        }
        let id = self.nodes.len();
        self.nodes.push(SearchNode {
            id,
            parent: Some(parent),
            incoming_action: Some(action),
            state,
            children: Vec::new(),
            q_estimate: prior,
            v_estimate: prior,
            prior_estimate: prior,
            value_sum: 0.0,
            visit_count: if self.method == MethodTag::Mcts { 0 } else { 1 },
            is_terminal,
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Node ids on the path root -> `id`, inclusive.
    pub fn path_to_root(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let mut path = Vec::new();
        let mut cur = self.node(id)?;
        loop {
            path.push(cur.id);
            match cur.parent {
                Some(p) => cur = self.node(p)?,
                None => break,
            }
        }
        path.reverse();
        Ok(path)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SearchNode<S, A>> {
        self.nodes.iter().filter(|n| n.children.is_empty())
    }

    /// Checks the structural invariants: parent/action pairing, the
    /// `v == q` identity, distinct acyclic children, full reachability
    /// from the root, and (for MCTS) visit-count accounting.
    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        if self.root_id >= n {
            return Err(TreeError::UnknownNode(self.root_id));
        }
        let mut seen_child = vec![false; n];
        for node in &self.nodes {
            let is_root = node.id == self.root_id;
            if is_root {
                if node.parent.is_some() || node.incoming_action.is_some() {
                    return Err(TreeError::Invalid("root has a parent or action".into()));
                }
            } else {
                if node.parent.is_none() || node.incoming_action.is_none() {
                    return Err(TreeError::Invalid(format!(
                        "non-root node {} lacks a parent or action",
                        node.id
                    )));
                }
                if (node.v_estimate - node.q_estimate).abs() > 1e-12 {
                    return Err(TreeError::Invalid(format!(
                        "node {}: v {} != q {}",
                        node.id, node.v_estimate, node.q_estimate
                    )));
                }
            }
            let mut child_visits = 0u32;
            for (i, &c) in node.children.iter().enumerate() {
                if c >= n {
                    return Err(TreeError::UnknownNode(c));
                }
                if node.children[..i].contains(&c) {
                    return Err(TreeError::Invalid(format!("duplicate child {c}")));
                }
                if self.nodes[c].parent != Some(node.id) {
                    return Err(TreeError::Invalid(format!(
                        "child {c} does not point back to {}",
                        node.id
                    )));
                }
                if seen_child[c] {
                    return Err(TreeError::Invalid(format!("node {c} has two parents")));
                }
                seen_child[c] = true;
                child_visits += self.nodes[c].visit_count;
            }
            if self.method == MethodTag::Mcts && node.visit_count < child_visits {
                return Err(TreeError::Invalid(format!(
                    "node {}: visits {} < child visits {}",
                    node.id, node.visit_count, child_visits
                )));
            }
        }
        // Reachability: every node except the root must be someone's child.
        for node in &self.nodes {
            if node.id != self.root_id && !seen_child[node.id] {
                return Err(TreeError::Invalid(format!("node {} unreachable", node.id)));
            }
        }
        Ok(())
    }
}

/// One node of a serialized tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub action: Option<String>,
    pub state: String,
    pub q: f64,
    pub v: f64,
    pub prior: f64,
    pub visits: u32,
    pub terminal: bool,
    pub children: Vec<NodeId>,
}

/// The documented JSON interchange form of a finished search tree.
///
/// Nodes are listed in id order; `tree_id` identifies the originating
/// instance when trees are persisted by the run harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub tree_id: String,
    pub method: MethodTag,
    pub root_id: NodeId,
    pub config: SearchConfig,
    pub nodes: Vec<NodeDump>,
}

impl<S, A> SearchTree<S, A> {
    /// Serializes the tree using the given render functions.
    pub fn dump(
        &self,
        tree_id: &str,
        render_state: impl Fn(&S) -> String,
        render_action: impl Fn(&A) -> String,
    ) -> TreeDump {
        TreeDump {
            tree_id: tree_id.to_string(),
            method: self.method,
            root_id: self.root_id,
            config: self.config.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    parent: n.parent,
                    action: n.incoming_action.as_ref().map(&render_action),
                    state: render_state(&n.state),
                    q: n.q_estimate,
                    v: n.v_estimate,
                    prior: n.prior_estimate,
                    visits: n.visit_count,
                    terminal: n.is_terminal,
                    children: n.children.clone(),
                })
                .collect(),
        }
    }
}

impl TreeDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree dump serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn root(&self) -> &NodeDump {
        &self.nodes[self.root_id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> SearchTree<String, String> {
        let mut t = SearchTree::new(
            MethodTag::Bfs,
            SearchConfig::default(),
            "root".to_string(),
            false,
        );
        let a = t
            .add_child(0, "a".to_string(), "s1".to_string(), 0.5, false)
            .unwrap();
        t.add_child(a, "b".to_string(), "s2".to_string(), 0.9, true)
            .unwrap();
        t
    }

    #[test]
    fn validate_accepts_well_formed_tree() {
        sample_tree().validate().unwrap();
    }

    #[test]
    fn validate_rejects_broken_identity() {
        let mut t = sample_tree();
        t.nodes[1].q_estimate = 0.1;
        assert!(t.validate().is_err());
    }

    #[test]
    fn validate_rejects_mcts_visit_deficit() {
        let mut t = SearchTree::new(
            MethodTag::Mcts,
            SearchConfig::default(),
            "root".to_string(),
            false,
        );
        t.add_child(0, "a".to_string(), "s1".to_string(), 0.5, false)
            .unwrap();
        t.nodes[1].visit_count = 3; // root still at 0
        assert!(t.validate().is_err());
    }

    #[test]
    fn dump_round_trips_through_json() {
        let t = sample_tree();
        let dump = t.dump("t0", |s| s.clone(), |a| a.clone());
        let back = TreeDump::from_json(&dump.to_json()).unwrap();
        assert_eq!(dump, back);
    }

    #[test]
    fn config_validation_names_zero_fields() {
        let cfg = SearchConfig {
            beam_width: 0,
            ..SearchConfig::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroCount("beam_width")));
    }
}
