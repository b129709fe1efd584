//! Monte Carlo tree search with UCT selection.
//!
//! Each iteration selects a path from the root, expands the reached node,
//! evaluates one new child, and backpropagates the value. Selection
//! prefers unvisited children (in insertion order); among visited ones it
//! maximizes `q + c * sqrt(ln(parent visits) / child visits)`. The value
//! estimate of a node is the running mean of its prior and every value
//! propagated through it, so the prior counts as one sample.

use super::{SearchError, SearchOutcome, ValueEvent};
use crate::env::Environment;
use crate::policy::PolicyModel;
use crate::tree::{MethodTag, NodeId, SearchConfig, SearchTree};

pub fn mcts_search<E: Environment>(
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
) -> Result<SearchOutcome<E::State, E::Action>, SearchError> {
    config.validate()?;
    let root_state = env.initial_state();
    let root_terminal = env.is_terminal(&root_state);
    let mut tree = SearchTree::new(MethodTag::Mcts, config.clone(), root_state, root_terminal);
    let mut value_events = Vec::new();

    for iteration in 0..config.mcts_iterations {
        let selected = select(&tree, config.exploration_constant);
        let (eval_node, value) = expand_and_evaluate(env, policy, config, &mut tree, selected)?;
        backpropagate(&mut tree, eval_node, value, iteration, &mut value_events)?;
    }

    let best_path = extract_best_path(&tree);
    let final_state = tree.node(*best_path.last().unwrap())?.state.clone();
    Ok(SearchOutcome {
        tree,
        best_path,
        final_state,
        value_events,
    })
}

/// Walks from the root while the current node has children.
fn select<S, A>(tree: &SearchTree<S, A>, c: f64) -> NodeId {
    let mut id = tree.root_id;
    while !tree.nodes[id].children.is_empty() {
        id = select_child(tree, id, c);
    }
    id
}

fn select_child<S, A>(tree: &SearchTree<S, A>, parent: NodeId, c: f64) -> NodeId {
    let node = &tree.nodes[parent];
    if let Some(&unvisited) = node
        .children
        .iter()
        .find(|&&ch| tree.nodes[ch].visit_count == 0)
    {
        return unvisited;
    }
    let ln_parent = (node.visit_count.max(1) as f64).ln();
    *node
        .children
        .iter()
        .max_by(|&&a, &&b| {
            let ua = uct(&tree.nodes[a], ln_parent, c);
            let ub = uct(&tree.nodes[b], ln_parent, c);
            ua.partial_cmp(&ub).unwrap().then(b.cmp(&a))
        })
        .expect("select_child is only called on nodes with children")
}

fn uct<S, A>(child: &crate::tree::SearchNode<S, A>, ln_parent: f64, c: f64) -> f64 {
    child.q_estimate + c * (ln_parent / child.visit_count as f64).sqrt()
}

/// Expands the selected node (all legal actions at once, priors from the
/// policy) and returns the node to backpropagate from plus its value.
///
/// Terminal nodes, and nodes that turn out to have no actions, propagate
/// the environment's terminal reward. Otherwise the most promising new
/// child (highest prior, ties to the lowest id) is evaluated: by rollout
/// when `rollout_depth > 0`, by its prior otherwise, and by terminal
/// reward when the child itself is terminal.
fn expand_and_evaluate<E: Environment>(
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
    tree: &mut SearchTree<E::State, E::Action>,
    selected: NodeId,
) -> Result<(NodeId, f64), SearchError> {
    let state = tree.node(selected)?.state.clone();
    if tree.nodes[selected].is_terminal {
        return Ok((selected, env.terminal_reward(&state)));
    }
    let actions = env.legal_actions(&state)?;
    if actions.is_empty() {
        tree.node_mut(selected)?.is_terminal = true;
        return Ok((selected, env.terminal_reward(&state)));
    }
    let state_render = env.render_state(&state);
    let mut best: Option<(NodeId, f64)> = None;
    for action in actions {
        let prior = policy.score_action(&state_render, &env.render_action(&action))?;
        let next = env.apply(&state, &action)?;
        let terminal = env.is_terminal(&next);
        let id = tree.add_child(selected, action, next, prior, terminal)?;
        if best.map_or(true, |(_, p)| prior > p) {
            best = Some((id, prior));
        }
    }
    let (child, _) = best.expect("at least one action was expanded");
    let child_node = &tree.nodes[child];
    let value = if child_node.is_terminal {
        env.terminal_reward(&child_node.state)
    } else if config.rollout_depth > 0 {
        policy.rollout_value(&env.render_state(&child_node.state), config.rollout_depth)?
    } else {
        child_node.prior_estimate
    };
    Ok((child, value))
}

/// Folds `value` into every node from `from` up to the root.
fn backpropagate<S, A>(
    tree: &mut SearchTree<S, A>,
    from: NodeId,
    value: f64,
    iteration: usize,
    events: &mut Vec<ValueEvent>,
) -> Result<(), SearchError> {
    let mut cur = Some(from);
    while let Some(id) = cur {
        let node = tree.node_mut(id)?;
        node.visit_count += 1;
        node.value_sum += value;
        node.v_estimate = (node.prior_estimate + node.value_sum) / (node.visit_count as f64 + 1.0);
        if node.parent.is_some() {
            node.q_estimate = node.v_estimate;
        }
        events.push(ValueEvent {
            iteration,
            node: id,
            value,
        });
        cur = tree.nodes[id].parent;
    }
    Ok(())
}

/// Greedy descent by value estimate; ties prefer the more visited child,
/// then the lower id.
fn extract_best_path<S, A>(tree: &SearchTree<S, A>) -> Vec<NodeId> {
    let mut path = vec![tree.root_id];
    let mut id = tree.root_id;
    while !tree.nodes[id].children.is_empty() {
        id = *tree.nodes[id]
            .children
            .iter()
            .max_by(|&&a, &&b| {
                let (na, nb) = (&tree.nodes[a], &tree.nodes[b]);
                na.v_estimate
                    .partial_cmp(&nb.v_estimate)
                    .unwrap()
                    .then(na.visit_count.cmp(&nb.visit_count))
                    .then(b.cmp(&a))
            })
            .expect("non-empty children");
        path.push(id);
    }
    path
}
