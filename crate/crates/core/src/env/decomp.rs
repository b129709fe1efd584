//! Question decomposition environment.
//!
//! States are a problem plus a growing chain of subquestion and subanswer
//! pairs; actions are candidate subquestions proposed by the policy, plus
//! a distinguished final-answer action. Transitions delegate to the
//! policy: applying a subquestion generates its subanswer, applying the
//! final action generates the final answer and terminates the episode.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment};
use crate::policy::PolicyModel;

/// Render of the terminating action; the policy recognizes it and routes
/// to the final-answer template.
pub const FINAL_ACTION: &str = "Now we can answer the original question.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionState {
    pub problem: String,
    /// Subquestion and subanswer pairs, in order.
    pub steps: Vec<(String, String)>,
    pub final_answer: Option<String>,
}

impl DecompositionState {
    pub fn new(problem: impl Into<String>) -> Self {
        Self {
            problem: problem.into(),
            steps: Vec::new(),
            final_answer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecompAction {
    Subquestion(String),
    FinalAnswer,
}

/// Pulls the last number out of free text, tolerating commas, currency
/// signs and trailing punctuation. This is how final answers are compared
/// against the gold answer.
pub fn extract_last_number(text: &str) -> Option<f64> {
    let mut last = None;
    for raw in text.split_whitespace() {
        // Trimming non-digits from the ends keeps interior decimal points
        // ("4.5") while dropping sentence punctuation ("36.").
        let cleaned = raw
            .trim_matches(|c: char| !c.is_ascii_digit())
            .replace(',', "");
        if let Ok(v) = cleaned.parse::<f64>() {
            last = Some(v);
        }
    }
    last
}

/// Decomposition task wired to a policy model.
pub struct DecompositionEnv {
    pub problem: String,
    pub gold_answer: Option<String>,
    /// Hard cap on chain length; past it only the final action remains.
    pub max_subquestions: usize,
    /// How many candidate subquestions to request per state.
    pub proposals_k: usize,
    policy: Arc<dyn PolicyModel>,
}

impl DecompositionEnv {
    pub fn new(problem: impl Into<String>, policy: Arc<dyn PolicyModel>) -> Self {
        Self {
            problem: problem.into(),
            gold_answer: None,
            max_subquestions: 10,
            proposals_k: 4,
            policy,
        }
    }

    pub fn with_gold_answer(mut self, gold: impl Into<String>) -> Self {
        self.gold_answer = Some(gold.into());
        self
    }

    pub fn with_limits(mut self, max_subquestions: usize, proposals_k: usize) -> Self {
        self.max_subquestions = max_subquestions;
        self.proposals_k = proposals_k;
        self
    }
}

impl Environment for DecompositionEnv {
    type State = DecompositionState;
    type Action = DecompAction;

    fn initial_state(&self) -> Self::State {
        DecompositionState::new(self.problem.clone())
    }

    fn legal_actions(&self, state: &Self::State) -> Result<Vec<Self::Action>, EnvError> {
        if state.final_answer.is_some() {
            return Ok(Vec::new());
        }
        let mut actions = Vec::new();
        if state.steps.len() < self.max_subquestions {
            let proposals = self
                .policy
                .propose_actions(&self.render_state(state), self.proposals_k)?;
            for q in proposals {
                // A repeated subquestion adds nothing to the chain.
                if !state.steps.iter().any(|(prev, _)| prev == &q) {
                    actions.push(DecompAction::Subquestion(q));
                }
            }
        }
        actions.push(DecompAction::FinalAnswer);
        Ok(actions)
    }

    fn apply(&self, state: &Self::State, action: &Self::Action) -> Result<Self::State, EnvError> {
        if state.final_answer.is_some() {
            return Err(EnvError::IllegalAction(
                "the episode already produced a final answer".into(),
            ));
        }
        let render = self.render_state(state);
        let mut next = state.clone();
        match action {
            DecompAction::Subquestion(q) => {
                if state.steps.len() >= self.max_subquestions {
                    return Err(EnvError::IllegalAction(format!(
                        "subquestion limit of {} reached",
                        self.max_subquestions
                    )));
                }
                let answer = self.policy.predict_next_state(&render, q)?;
                next.steps.push((q.clone(), answer));
            }
            DecompAction::FinalAnswer => {
                let answer = self.policy.predict_next_state(&render, FINAL_ACTION)?;
                next.final_answer = Some(answer);
            }
        }
        Ok(next)
    }

    fn is_terminal(&self, state: &Self::State) -> bool {
        state.final_answer.is_some()
    }

    fn terminal_reward(&self, state: &Self::State) -> f64 {
        let (Some(answer), Some(gold)) = (&state.final_answer, &self.gold_answer) else {
            return 0.0;
        };
        match (extract_last_number(answer), extract_last_number(gold)) {
            (Some(a), Some(g)) if (a - g).abs() < 1e-6 => 1.0,
            _ => 0.0,
        }
    }

    fn render_state(&self, state: &Self::State) -> String {
        let mut out = format!("Question: {}", state.problem);
        for (i, (q, a)) in state.steps.iter().enumerate() {
            write!(out, "\nSubquestion {}: {}\nSubanswer {}: {}", i + 1, q, i + 1, a).unwrap();
        }
        if let Some(answer) = &state.final_answer {
            write!(out, "\nAnswer: {answer}").unwrap();
        }
        out
    }

    fn render_action(&self, action: &Self::Action) -> String {
        match action {
            DecompAction::Subquestion(q) => q.clone(),
            DecompAction::FinalAnswer => FINAL_ACTION.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyError;

    /// Minimal policy: proposes one fixed subquestion, answers every
    /// subquestion with "6", answers the final action with "36".
    struct Fixed;

    impl PolicyModel for Fixed {
        fn propose_actions(&self, _state: &str, _k: usize) -> Result<Vec<String>, PolicyError> {
            Ok(vec!["What is the rate?".into()])
        }
        fn score_action(&self, _state: &str, _action: &str) -> Result<f64, PolicyError> {
            Ok(0.5)
        }
        fn predict_next_state(&self, _state: &str, action: &str) -> Result<String, PolicyError> {
            Ok(if action == FINAL_ACTION {
                "The answer is 36.".into()
            } else {
                "The rate is 6 per hour.".into()
            })
        }
        fn generate(&self, _prompt: &str) -> Result<String, PolicyError> {
            Err(PolicyError::Unsupported("generate"))
        }
        fn rollout_value(&self, _state: &str, _depth: usize) -> Result<f64, PolicyError> {
            Ok(0.0)
        }
    }

    fn env() -> DecompositionEnv {
        DecompositionEnv::new("How many in six hours?", Arc::new(Fixed)).with_gold_answer("36")
    }

    #[test]
    fn chain_grows_then_terminates() {
        let env = env();
        let s0 = env.initial_state();
        let actions = env.legal_actions(&s0).unwrap();
        assert_eq!(actions.len(), 2);
        let s1 = env.apply(&s0, &actions[0]).unwrap();
        assert_eq!(s1.steps.len(), 1);
        // The proposed subquestion is already in the chain, so only the
        // final action remains.
        assert_eq!(env.legal_actions(&s1).unwrap(), vec![DecompAction::FinalAnswer]);
        let s2 = env.apply(&s1, &DecompAction::FinalAnswer).unwrap();
        assert!(env.is_terminal(&s2));
        assert_eq!(env.terminal_reward(&s2), 1.0);
        assert!(env.legal_actions(&s2).unwrap().is_empty());
    }

    #[test]
    fn render_interleaves_subquestions_and_subanswers() {
        let env = env();
        let mut s = env.initial_state();
        s.steps.push(("What is the rate?".into(), "The rate is 6 per hour.".into()));
        assert_eq!(
            env.render_state(&s),
            "Question: How many in six hours?\nSubquestion 1: What is the rate?\nSubanswer 1: The rate is 6 per hour."
        );
    }

    #[test]
    fn wrong_final_answer_earns_nothing() {
        let env = DecompositionEnv::new("q", Arc::new(Fixed)).with_gold_answer("35");
        let mut s = env.initial_state();
        s.final_answer = Some("The answer is 36.".into());
        assert_eq!(env.terminal_reward(&s), 0.0);
    }

    #[test]
    fn subquestion_cap_leaves_only_the_final_action() {
        let env = DecompositionEnv::new("q", Arc::new(Fixed)).with_limits(0, 4);
        let s = env.initial_state();
        assert_eq!(env.legal_actions(&s).unwrap(), vec![DecompAction::FinalAnswer]);
        assert!(matches!(
            env.apply(&s, &DecompAction::Subquestion("x".into())),
            Err(EnvError::IllegalAction(_))
        ));
    }

    #[test]
    fn number_extraction_handles_punctuation() {
        assert_eq!(extract_last_number("The total is $1,200."), Some(1200.0));
        assert_eq!(extract_last_number("It takes 4.5 hours."), Some(4.5));
        assert_eq!(extract_last_number("Rate 6, so total 36"), Some(36.0));
        assert_eq!(extract_last_number("no digits here"), None);
    }
}
