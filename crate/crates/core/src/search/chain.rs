//! Single-chain baseline: at every state all legal actions are scored
//! once and the best one is taken, with no lookahead and no revisiting.
//! The rejected siblings stay in the tree so reflection can still read
//! the decision points.

use super::{SearchError, SearchOutcome};
use crate::env::Environment;
use crate::policy::PolicyModel;
use crate::tree::{MethodTag, NodeId, SearchConfig, SearchTree};

pub fn sample_chain<E: Environment>(
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
) -> Result<SearchOutcome<E::State, E::Action>, SearchError> {
    config.validate()?;
    let root_state = env.initial_state();
    let root_terminal = env.is_terminal(&root_state);
    let mut tree = SearchTree::new(MethodTag::Chain, config.clone(), root_state, root_terminal);

    let mut current: NodeId = tree.root_id;
    for depth in 0..config.depth_limit {
        if tree.nodes[current].is_terminal {
            break;
        }
        let state = tree.node(current)?.state.clone();
        let state_render = env.render_state(&state);
        let actions = env.legal_actions(&state)?;
        if actions.is_empty() {
            if depth == 0 {
                return Err(SearchError::EmptyFrontier);
            }
            break;
        }
        let mut best: Option<NodeId> = None;
        for action in actions {
            let prior = policy.score_action(&state_render, &env.render_action(&action))?;
            let next = env.apply(&state, &action)?;
            let terminal = env.is_terminal(&next);
            let id = tree.add_child(current, action, next, prior, terminal)?;
            // Strict comparison keeps the earliest child on ties.
            if best.map_or(true, |b| tree.nodes[id].v_estimate > tree.nodes[b].v_estimate) {
                best = Some(id);
            }
        }
        current = best.expect("at least one action was scored");
    }

    let best_path = tree.path_to_root(current)?;
    let final_state = tree.node(current)?.state.clone();
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

    #[test]
    fn greedy_chain_follows_the_oracle_to_the_goal() {
        let env = BlocksEnv::new(
            blocks::parse_statement(
                "As initial conditions I have that, the red block is clear, the hand is empty, the red block is on top of the blue block and the blue block is on the table.\nMy goal is to have that the blue block is on top of the red block.",
            )
            .unwrap(),
        );
        let out = sample_chain(&env, &OraclePolicy::new(), &SearchConfig::default()).unwrap();
        out.tree.validate().unwrap();
        assert!(env.is_terminal(&out.final_state));
        assert_eq!(out.best_path.len(), 5);
        // Siblings of the chosen path remain recorded.
        assert!(out.tree.nodes.len() > out.best_path.len());
    }

    #[test]
    fn depth_limit_stops_the_chain() {
        let env = BlocksEnv::new(
            blocks::parse_statement(
                "As initial conditions I have that, the red block is clear, the hand is empty, the red block is on top of the blue block and the blue block is on the table.\nMy goal is to have that the blue block is on top of the red block.",
            )
            .unwrap(),
        );
        let config = SearchConfig {
            depth_limit: 2,
            ..SearchConfig::default()
        };
        let out = sample_chain(&env, &OraclePolicy::new(), &config).unwrap();
        assert_eq!(out.best_path.len(), 3);
        assert!(!env.is_terminal(&out.final_state));
    }
}
