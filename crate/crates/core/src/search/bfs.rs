//! Beam breadth-first search.
//!
//! The search proceeds depth-synchronously: every frontier state expands
//! all of its legal actions, each new child is scored by the policy
//! exactly once (the score becomes its value estimate), and the best
//! `beam_width` children survive as the next frontier. All children stay
//! in the tree; the beam only limits further expansion.

use super::{best_leaf, SearchError, SearchOutcome};
use crate::env::Environment;
use crate::policy::PolicyModel;
use crate::tree::{MethodTag, NodeId, SearchConfig, SearchTree};

pub fn beam_bfs<E: Environment>(
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
) -> Result<SearchOutcome<E::State, E::Action>, SearchError> {
    config.validate()?;
    let root_state = env.initial_state();
    let root_terminal = env.is_terminal(&root_state);
    let mut tree = SearchTree::new(MethodTag::Bfs, config.clone(), root_state, root_terminal);

    let mut frontier: Vec<NodeId> = if root_terminal { Vec::new() } else { vec![tree.root_id] };
    for depth in 0..config.depth_limit {
        if frontier.is_empty() {
            break;
        }
        let mut new_children: Vec<NodeId> = Vec::new();
        for &node_id in &frontier {
            let state = tree.node(node_id)?.state.clone();
            let state_render = env.render_state(&state);
            for action in env.legal_actions(&state)? {
                let prior = policy.score_action(&state_render, &env.render_action(&action))?;
                let next = env.apply(&state, &action)?;
                let terminal = env.is_terminal(&next);
                new_children.push(tree.add_child(node_id, action, next, prior, terminal)?);
            }
        }
        if new_children.is_empty() {
            if depth == 0 {
                return Err(SearchError::EmptyFrontier);
            }
            break;
        }
        // Survivors: highest value first, ties to the lower id.
        new_children.sort_by(|&a, &b| {
            let (na, nb) = (&tree.nodes[a], &tree.nodes[b]);
            nb.v_estimate
                .partial_cmp(&na.v_estimate)
                .unwrap()
                .then(na.id.cmp(&nb.id))
        });
        frontier = new_children
            .into_iter()
            .take(config.beam_width)
            .filter(|&id| !tree.nodes[id].is_terminal)
            .collect();
    }

    let best = best_leaf(&tree);
    let best_path = tree.path_to_root(best)?;
    let final_state = tree.node(best)?.state.clone();
    Ok(SearchOutcome {
        tree,
        best_path,
        final_state,
        value_events: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::blocks::{self, BlocksEnv};
    use crate::policy::OraclePolicy;

    fn two_step_env() -> BlocksEnv {
        let state = blocks::parse_statement(
            "As initial conditions I have that, the red block is clear, the hand is empty, the red block is on top of the blue block and the blue block is on the table.\nMy goal is to have that the red block is on the table and the blue block is on the table.",
        )
        .unwrap();
        BlocksEnv::new(state)
    }

    #[test]
    fn oracle_guided_beam_finds_the_two_step_plan() {
        let env = two_step_env();
        let config = SearchConfig {
            beam_width: 3,
            depth_limit: 4,
            ..SearchConfig::default()
        };
        let out = beam_bfs(&env, &OraclePolicy::new(), &config).unwrap();
        out.tree.validate().unwrap();
        assert!(env.is_terminal(&out.final_state));
        assert_eq!(out.best_path.len(), 3);
    }

    #[test]
    fn terminal_root_yields_a_single_node_tree() {
        let state = blocks::parse_statement(
            "As initial conditions I have that, the red block is clear, the hand is empty and the red block is on the table.\nMy goal is to have that the red block is on the table.",
        )
        .unwrap();
        let env = BlocksEnv::new(state);
        let out = beam_bfs(&env, &OraclePolicy::new(), &SearchConfig::default()).unwrap();
        assert_eq!(out.tree.nodes.len(), 1);
        assert_eq!(out.best_path, vec![0]);
    }

    #[test]
    fn each_child_is_scored_exactly_once() {
        use crate::policy::mock::{PolicyFixture, ScriptedPolicy};
        let env = two_step_env();
        let fixture = PolicyFixture::from_json(r#"{"mode": "script", "default_score": 0.5}"#).unwrap();
        let policy = ScriptedPolicy::from_fixture(&fixture).unwrap();
        let config = SearchConfig {
            beam_width: 2,
            depth_limit: 2,
            ..SearchConfig::default()
        };
        let out = beam_bfs(&env, &policy, &config).unwrap();
        let children = out.tree.nodes.len() - 1;
        assert_eq!(policy.call_count("score"), children as u32);
    }

    #[test]
    fn beam_width_caps_the_frontier() {
        let env = two_step_env();
        let narrow = SearchConfig {
            beam_width: 1,
            depth_limit: 4,
            ..SearchConfig::default()
        };
        let out = beam_bfs(&env, &OraclePolicy::new(), &narrow).unwrap();
        // With b = 1 each depth expands one node, so at most one node per
        // depth has children.
        let expanded: Vec<_> = out
            .tree
            .nodes
            .iter()
            .filter(|n| !n.children.is_empty())
            .collect();
        let mut depths = std::collections::HashSet::new();
        for node in expanded {
            let depth = out.tree.path_to_root(node.id).unwrap().len();
            assert!(depths.insert(depth), "two expanded nodes at one depth");
        }
    }
}
