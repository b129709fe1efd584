//! Prompted policies: the block-stacking evaluator and the question
//! decomposition policy, both driven by a [`TextCompleter`] backend.
//!
//! Action scores come from repeated sampled label completions (the
//! fraction of positive labels). Scores are cached per state, action and
//! guideline version so each pair costs at most one batch of backend
//! calls per guideline.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::prompt::{assemble_prompt, PromptBundle, TemplateStore};
use super::{parse_label, PolicyError, PolicyModel, TextCompleter};
use crate::env::blocks;
use crate::env::decomp::FINAL_ACTION;

/// The guideline currently injected into prompts, shared between the
/// reflection loop and the policies. The version counter advances on
/// every change so score caches never serve stale entries.
#[derive(Default)]
pub struct ActiveGuideline {
    inner: Mutex<(Option<String>, u64)>,
}

impl ActiveGuideline {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn set(&self, text: impl Into<String>) {
        let mut g = self.inner.lock().unwrap();
        g.0 = Some(text.into());
        g.1 += 1;
    }

    pub fn clear(&self) {
        let mut g = self.inner.lock().unwrap();
        g.0 = None;
        g.1 += 1;
    }

    pub fn snapshot(&self) -> (Option<String>, u64) {
        self.inner.lock().unwrap().clone()
    }
}

/// Observer for every assembled prompt a policy sends out. Clone freely;
/// all clones share one buffer.
#[derive(Clone, Default)]
pub struct PromptTap {
    prompts: Arc<Mutex<Vec<String>>>,
}

impl PromptTap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, prompt: &str) {
        self.prompts.lock().unwrap().push(prompt.to_string());
    }

    pub fn drain(&self) -> Vec<String> {
        std::mem::take(&mut *self.prompts.lock().unwrap())
    }

    pub fn all(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

/// Shared plumbing for the two prompted policies.
struct PromptedCore {
    completer: Arc<dyn TextCompleter>,
    templates: TemplateStore,
    guideline: Arc<ActiveGuideline>,
    samples: usize,
    tap: Option<PromptTap>,
    score_cache: Mutex<HashMap<(u64, String, String), f64>>,
    backend_calls: Mutex<u64>,
}

impl PromptedCore {
    fn new(
        completer: Arc<dyn TextCompleter>,
        templates: TemplateStore,
        guideline: Arc<ActiveGuideline>,
        samples: usize,
    ) -> Self {
        Self {
            completer,
            templates,
            guideline,
            samples: samples.max(1),
            tap: None,
            score_cache: Mutex::new(HashMap::new()),
            backend_calls: Mutex::new(0),
        }
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, PolicyError> {
        let prompt = assemble_prompt(bundle, &self.templates)?;
        if let Some(tap) = &self.tap {
            tap.record(&prompt);
        }
        *self.backend_calls.lock().unwrap() += 1;
        self.completer.complete(&prompt)
    }

    /// Label-frequency score, cached per (guideline version, state,
    /// action).
    fn sampled_score(
        &self,
        template_id: &str,
        demos: &[String],
        state: &str,
        action: &str,
        query: String,
    ) -> Result<f64, PolicyError> {
        let (guideline, version) = self.guideline.snapshot();
        let cache_key = (version, state.to_string(), action.to_string());
        if let Some(&v) = self.score_cache.lock().unwrap().get(&cache_key) {
            return Ok(v);
        }
        let bundle = PromptBundle {
            template_id: template_id.to_string(),
            demos: demos.to_vec(),
            guideline,
            query,
        };
        let mut positive = 0usize;
        for _ in 0..self.samples {
            if parse_label(&self.complete(&bundle)?)? {
                positive += 1;
            }
        }
        let score = positive as f64 / self.samples as f64;
        self.score_cache.lock().unwrap().insert(cache_key, score);
        Ok(score)
    }

    fn backend_call_count(&self) -> u64 {
        *self.backend_calls.lock().unwrap()
    }
}

/// Block-stacking policy: actions and transitions follow the task rules
/// exactly; only the action evaluation consults the backend.
pub struct BlocksPromptPolicy {
    core: PromptedCore,
    demos: Vec<String>,
}

impl BlocksPromptPolicy {
    pub fn new(
        completer: Arc<dyn TextCompleter>,
        templates: TemplateStore,
        guideline: Arc<ActiveGuideline>,
        demos: Vec<String>,
        samples: usize,
    ) -> Self {
        Self {
            core: PromptedCore::new(completer, templates, guideline, samples),
            demos,
        }
    }

    pub fn with_tap(mut self, tap: PromptTap) -> Self {
        self.core.tap = Some(tap);
        self
    }

    pub fn backend_call_count(&self) -> u64 {
        self.core.backend_call_count()
    }
}

impl PolicyModel for BlocksPromptPolicy {
    fn propose_actions(&self, state: &str, k: usize) -> Result<Vec<String>, PolicyError> {
        let s = blocks::parse_statement(state).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        Ok(blocks::legal_actions(&s)
            .iter()
            .take(k)
            .map(blocks::render_action)
            .collect())
    }

    fn score_action(&self, state: &str, action: &str) -> Result<f64, PolicyError> {
        let query = format!("[STATEMENT]\n{state}\n[ACTION]\n{action}\n[EVALUATION]\n");
        self.core
            .sampled_score("blocks_action_eval", &self.demos, state, action, query)
    }

    fn predict_next_state(&self, state: &str, action: &str) -> Result<String, PolicyError> {
        let s = blocks::parse_statement(state).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let a = blocks::parse_action(action).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let next = blocks::apply(&s, &a).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        Ok(blocks::render_statement(&next))
    }

    fn generate(&self, prompt: &str) -> Result<String, PolicyError> {
        if let Some(tap) = &self.core.tap {
            tap.record(prompt);
        }
        self.core.completer.complete(prompt)
    }

    fn rollout_value(&self, _state: &str, _depth: usize) -> Result<f64, PolicyError> {
        Err(PolicyError::Unsupported("rollout_value"))
    }
}

/// Question decomposition policy: subquestion proposal, usefulness
/// scoring and subanswer generation all go through the backend.
pub struct DecompPromptPolicy {
    core: PromptedCore,
    propose_demos: Vec<String>,
    score_demos: Vec<String>,
    answer_demos: Vec<String>,
}

impl DecompPromptPolicy {
    pub fn new(
        completer: Arc<dyn TextCompleter>,
        templates: TemplateStore,
        guideline: Arc<ActiveGuideline>,
        samples: usize,
    ) -> Self {
        Self {
            core: PromptedCore::new(completer, templates, guideline, samples),
            propose_demos: Vec::new(),
            score_demos: Vec::new(),
            answer_demos: Vec::new(),
        }
    }

    pub fn with_demos(
        mut self,
        propose: Vec<String>,
        score: Vec<String>,
        answer: Vec<String>,
    ) -> Self {
        self.propose_demos = propose;
        self.score_demos = score;
        self.answer_demos = answer;
        self
    }

    pub fn with_tap(mut self, tap: PromptTap) -> Self {
        self.core.tap = Some(tap);
        self
    }

    pub fn backend_call_count(&self) -> u64 {
        self.core.backend_call_count()
    }
}

/// Turns a proposal completion into clean candidate lines: numbering and
/// bullet markers stripped, blanks dropped, duplicates removed.
fn parse_proposals(completion: &str, k: usize) -> Vec<String> {
    let mut seen = Vec::new();
    for line in completion.lines() {
        let line = line
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit())
            .trim_start_matches(['.', ')', '-', '*'])
            .trim();
        if line.is_empty() || seen.iter().any(|s| s == line) {
            continue;
        }
        seen.push(line.to_string());
        if seen.len() == k {
            break;
        }
    }
    seen
}

impl PolicyModel for DecompPromptPolicy {
    fn propose_actions(&self, state: &str, k: usize) -> Result<Vec<String>, PolicyError> {
        let bundle = PromptBundle {
            template_id: "decomp_propose".to_string(),
            demos: self.propose_demos.clone(),
            guideline: self.core.guideline.snapshot().0,
            query: state.to_string(),
        };
        let completion = self.core.complete(&bundle)?;
        Ok(parse_proposals(&completion, k))
    }

    fn score_action(&self, state: &str, action: &str) -> Result<f64, PolicyError> {
        let query = format!("{state}\nNew subquestion: {action}\nUseful?");
        self.core
            .sampled_score("decomp_usefulness", &self.score_demos, state, action, query)
    }

    fn predict_next_state(&self, state: &str, action: &str) -> Result<String, PolicyError> {
        let (template, query) = if action == FINAL_ACTION {
            ("decomp_final", state.to_string())
        } else {
            ("decomp_answer", format!("{state}\nSubquestion: {action}"))
        };
        let bundle = PromptBundle {
            template_id: template.to_string(),
            demos: self.answer_demos.clone(),
            guideline: self.core.guideline.snapshot().0,
            query,
        };
        self.core.complete(&bundle)
    }

    fn generate(&self, prompt: &str) -> Result<String, PolicyError> {
        if let Some(tap) = &self.core.tap {
            tap.record(prompt);
        }
        self.core.completer.complete(prompt)
    }

    fn rollout_value(&self, _state: &str, _depth: usize) -> Result<f64, PolicyError> {
        Err(PolicyError::Unsupported("rollout_value"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mock::{BackendRule, ScriptedBackend};

    const STATEMENT: &str = "As initial conditions I have that, the red block is clear, the hand is empty, the red block is on top of the blue block and the blue block is on the table.\nMy goal is to have that the blue block is on top of the red block.";

    fn blocks_policy(backend: ScriptedBackend, samples: usize) -> BlocksPromptPolicy {
        BlocksPromptPolicy::new(
            Arc::new(backend),
            TemplateStore::builtin(),
            ActiveGuideline::new(),
            Vec::new(),
            samples,
        )
    }

    #[test]
    fn score_is_the_positive_label_frequency() {
        let backend = ScriptedBackend::new(
            Vec::new(),
            vec![
                "good".into(),
                "good".into(),
                "good".into(),
                "good".into(),
                "good".into(),
                "good".into(),
                "good".into(),
                "bad".into(),
                "bad".into(),
                "bad".into(),
            ],
            false,
        );
        let p = blocks_policy(backend, 10);
        let score = p
            .score_action(STATEMENT, "unstack the red block from on top of the blue block")
            .unwrap();
        assert!((score - 0.7).abs() < 1e-12);
        assert_eq!(p.backend_call_count(), 10);
    }

    #[test]
    fn repeat_scores_hit_the_cache() {
        let p = blocks_policy(ScriptedBackend::fixed("good"), 3);
        let a = "unstack the red block from on top of the blue block";
        p.score_action(STATEMENT, a).unwrap();
        p.score_action(STATEMENT, a).unwrap();
        assert_eq!(p.backend_call_count(), 3);
    }

    #[test]
    fn guideline_change_invalidates_the_cache() {
        let guideline = ActiveGuideline::new();
        let p = BlocksPromptPolicy::new(
            Arc::new(ScriptedBackend::fixed("good")),
            TemplateStore::builtin(),
            guideline.clone(),
            Vec::new(),
            1,
        );
        let a = "unstack the red block from on top of the blue block";
        p.score_action(STATEMENT, a).unwrap();
        guideline.set("Unstack misplaced blocks first.");
        p.score_action(STATEMENT, a).unwrap();
        assert_eq!(p.backend_call_count(), 2);
    }

    #[test]
    fn tap_sees_every_prompt_with_the_guideline_once() {
        let guideline = ActiveGuideline::new();
        guideline.set("Unstack misplaced blocks first.");
        let tap = PromptTap::new();
        let p = BlocksPromptPolicy::new(
            Arc::new(ScriptedBackend::fixed("good")),
            TemplateStore::builtin(),
            guideline,
            Vec::new(),
            2,
        )
        .with_tap(tap.clone());
        p.score_action(STATEMENT, "pick up the red block").unwrap();
        let prompts = tap.all();
        assert_eq!(prompts.len(), 2);
        for prompt in prompts {
            assert_eq!(prompt.matches("Unstack misplaced blocks first.").count(), 1);
        }
    }

    #[test]
    fn proposal_lines_are_cleaned_and_capped() {
        let text = "1. What is the rate?\n2. What is the rate?\n- How long does it take?\n\n3) What is the total?";
        let parsed = parse_proposals(text, 2);
        assert_eq!(parsed, ["What is the rate?", "How long does it take?"]);
    }

    #[test]
    fn decomp_final_action_uses_the_final_template() {
        let backend = ScriptedBackend::new(
            vec![
                BackendRule {
                    contains: "Derive the final answer".into(),
                    replies: vec!["The answer is 42.".into()],
                },
                BackendRule {
                    contains: "Answer the subquestion".into(),
                    replies: vec!["The rate is 6.".into()],
                },
            ],
            Vec::new(),
            true,
        );
        let p = DecompPromptPolicy::new(
            Arc::new(backend),
            TemplateStore::builtin(),
            ActiveGuideline::new(),
            1,
        );
        assert_eq!(
            p.predict_next_state("Question: q", "What is the rate?").unwrap(),
            "The rate is 6."
        );
        assert_eq!(
            p.predict_next_state("Question: q", FINAL_ACTION).unwrap(),
            "The answer is 42."
        );
    }
}
