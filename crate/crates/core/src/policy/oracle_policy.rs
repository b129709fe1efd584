//! Exact policy for the block-stacking task, backed by breadth-first
//! distances to the goal. Used as the reference model in tests and for
//! calibrating search settings.

use std::collections::HashMap;
use std::sync::Mutex;

use super::{PolicyError, PolicyModel};
use crate::env::blocks::{self, BlocksState};
use crate::env::oracle::DistanceOracle;

/// Deterministic [`PolicyModel`] that scores an action as
/// `1 - d(s') / (d(s) + 1)` where `d` is the exact remaining plan length.
pub struct OraclePolicy {
    oracles: Mutex<HashMap<String, DistanceOracle>>,
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl OraclePolicy {
    pub fn new() -> Self {
        Self {
            oracles: Mutex::new(HashMap::new()),
        }
    }

    fn parse(state: &str) -> Result<BlocksState, PolicyError> {
        blocks::parse_statement(state).map_err(|e| PolicyError::BadInput(e.to_string()))
    }

    /// Runs `f` with the distance table for this state's block set and
    /// goal, building and caching it on first use.
    fn with_oracle<T>(
        &self,
        state: &BlocksState,
        f: impl FnOnce(&DistanceOracle) -> Result<T, PolicyError>,
    ) -> Result<T, PolicyError> {
        let mut key: Vec<String> = state.blocks();
        key.sort();
        let key = format!("{}|{}", key.join(","), blocks::render_goal(&state.goal));
        let mut oracles = self.oracles.lock().unwrap();
        if !oracles.contains_key(&key) {
            let oracle =
                DistanceOracle::new(state).map_err(|e| PolicyError::BadInput(e.to_string()))?;
            oracles.insert(key.clone(), oracle);
        }
        f(oracles.get(&key).unwrap())
    }
}

impl PolicyModel for OraclePolicy {
    fn propose_actions(&self, state: &str, k: usize) -> Result<Vec<String>, PolicyError> {
        let s = Self::parse(state)?;
        Ok(blocks::legal_actions(&s)
            .iter()
            .take(k)
            .map(blocks::render_action)
            .collect())
    }

    fn score_action(&self, state: &str, action: &str) -> Result<f64, PolicyError> {
        let s = Self::parse(state)?;
        let a = blocks::parse_action(action).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        self.with_oracle(&s, |oracle| {
            oracle
                .action_value(&s, &a)
                .map_err(|e| PolicyError::BadInput(e.to_string()))
        })
    }

    fn predict_next_state(&self, state: &str, action: &str) -> Result<String, PolicyError> {
        let s = Self::parse(state)?;
        let a = blocks::parse_action(action).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let next = blocks::apply(&s, &a).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        Ok(blocks::render_statement(&next))
    }

    fn generate(&self, _prompt: &str) -> Result<String, PolicyError> {
        Err(PolicyError::Unsupported("generate"))
    }

    fn rollout_value(&self, state: &str, _depth: usize) -> Result<f64, PolicyError> {
        let s = Self::parse(state)?;
        self.with_oracle(&s, |oracle| {
            let d = oracle
                .distance(&s)
                .map_err(|e| PolicyError::BadInput(e.to_string()))?;
            Ok(1.0 / (1.0 + d as f64))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STEP: &str = "As initial conditions I have that, the red block is clear, the hand is empty, the red block is on top of the blue block and the blue block is on the table.\nMy goal is to have that the blue block is on top of the red block.";

    #[test]
    fn optimal_action_scores_highest() {
        let p = OraclePolicy::new();
        let actions = p.propose_actions(TWO_STEP, 10).unwrap();
        let mut scored: Vec<(f64, String)> = actions
            .into_iter()
            .map(|a| (p.score_action(TWO_STEP, &a).unwrap(), a))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        assert_eq!(scored[0].1, "unstack the red block from on top of the blue block");
    }

    #[test]
    fn rollout_value_reflects_remaining_distance() {
        let p = OraclePolicy::new();
        // Solving this statement needs unstack, put down, pick up, stack.
        assert!((p.rollout_value(TWO_STEP, 0).unwrap() - 1.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn next_state_render_round_trips() {
        let p = OraclePolicy::new();
        let next = p
            .predict_next_state(TWO_STEP, "unstack the red block from on top of the blue block")
            .unwrap();
        assert!(next.contains("the hand is holding the red block"));
        assert!(next.starts_with("As initial conditions I have that,"));
    }

    #[test]
    fn generation_is_unsupported() {
        assert!(matches!(
            OraclePolicy::new().generate("anything"),
            Err(PolicyError::Unsupported(_))
        ));
    }
}
