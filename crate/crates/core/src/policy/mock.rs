//! Scripted policy fixtures for offline runs and tests.
//!
//! A fixture is a JSON document tagged by `mode`. Scripted fixtures map
//! queries to canned replies; the guideline-sensitive backend answers
//! block-stacking evaluation prompts correctly only when a chosen sentinel
//! phrase is present in the prompt, which lets tests demonstrate that an
//! injected guideline changes downstream behaviour.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PolicyError, PolicyModel, TextCompleter};
use crate::env::blocks::{self, BlocksState};
use crate::env::oracle::DistanceOracle;

/// On-disk form of a scripted policy or backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PolicyFixture {
    /// Exact query-to-reply tables for each policy operation.
    Script {
        #[serde(default)]
        propose: HashMap<String, Vec<String>>,
        /// Keyed by `"{state}\n=>\n{action}"`.
        #[serde(default)]
        score: HashMap<String, f64>,
        #[serde(default)]
        predict: HashMap<String, String>,
        #[serde(default)]
        generate: HashMap<String, String>,
        #[serde(default)]
        rollout: HashMap<String, f64>,
        #[serde(default)]
        default_score: Option<f64>,
        /// When true, an unmatched query is an error instead of a default.
        #[serde(default)]
        strict: bool,
    },
    /// Every completion returns the same text.
    Fixed { text: String },
    /// Backend rules: the first rule whose `contains` substring appears in
    /// the prompt answers with its replies, cycling.
    Backend {
        rules: Vec<BackendRule>,
        #[serde(default)]
        default: Vec<String>,
        #[serde(default)]
        strict: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendRule {
    pub contains: String,
    pub replies: Vec<String>,
}

impl PolicyFixture {
    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(text).map_err(|e| PolicyError::BadInput(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PolicyError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Joins a state and action into the score/predict table key.
pub fn pair_key(state: &str, action: &str) -> String {
    format!("{state}\n=>\n{action}")
}

fn digest_key(key: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(key.as_bytes())))
}

/// Looks a key up directly, then by its digest form. Long keys can be
/// stored in fixtures as `sha256:<hex>` of the plain key.
fn lookup<'a, V>(map: &'a HashMap<String, V>, key: &str) -> Option<&'a V> {
    map.get(key).or_else(|| map.get(&digest_key(key)))
}

/// Table-driven [`PolicyModel`]. Tracks per-operation call counts so tests
/// can assert caching behaviour.
pub struct ScriptedPolicy {
    propose: HashMap<String, Vec<String>>,
    score: HashMap<String, f64>,
    predict: HashMap<String, String>,
    generate: HashMap<String, String>,
    rollout: HashMap<String, f64>,
    default_score: Option<f64>,
    strict: bool,
    pub calls: Mutex<HashMap<&'static str, u32>>,
}

impl ScriptedPolicy {
    pub fn from_fixture(fixture: &PolicyFixture) -> Result<Self, PolicyError> {
        match fixture {
            PolicyFixture::Script {
                propose,
                score,
                predict,
                generate,
                rollout,
                default_score,
                strict,
            } => Ok(Self {
                propose: propose.clone(),
                score: score.clone(),
                predict: predict.clone(),
                generate: generate.clone(),
                rollout: rollout.clone(),
                default_score: *default_score,
                strict: *strict,
                calls: Mutex::new(HashMap::new()),
            }),
            _ => Err(PolicyError::BadInput(
                "fixture mode is not a scripted policy".into(),
            )),
        }
    }

    fn count(&self, op: &'static str) {
        *self.calls.lock().unwrap().entry(op).or_insert(0) += 1;
    }

    pub fn call_count(&self, op: &str) -> u32 {
        self.calls.lock().unwrap().get(op).copied().unwrap_or(0)
    }

    fn miss<T>(&self, op: &str, key: &str, fallback: Option<T>) -> Result<T, PolicyError> {
        match fallback {
            Some(v) if !self.strict => Ok(v),
            _ => Err(PolicyError::UnscriptedQuery(format!("{op}: {key:?}"))),
        }
    }
}

impl PolicyModel for ScriptedPolicy {
    fn propose_actions(&self, state: &str, k: usize) -> Result<Vec<String>, PolicyError> {
        self.count("propose");
        match lookup(&self.propose, state) {
            Some(v) => Ok(v.iter().take(k).cloned().collect()),
            None => self.miss("propose", state, Some(Vec::new())),
        }
    }

    fn score_action(&self, state: &str, action: &str) -> Result<f64, PolicyError> {
        self.count("score");
        let key = pair_key(state, action);
        match lookup(&self.score, &key) {
            Some(&v) => Ok(v),
            None => self.miss("score", &key, self.default_score),
        }
    }

    fn predict_next_state(&self, state: &str, action: &str) -> Result<String, PolicyError> {
        self.count("predict");
        let key = pair_key(state, action);
        match lookup(&self.predict, &key) {
            Some(v) => Ok(v.clone()),
            None => self.miss("predict", &key, None),
        }
    }

    fn generate(&self, prompt: &str) -> Result<String, PolicyError> {
        self.count("generate");
        match lookup(&self.generate, prompt) {
            Some(v) => Ok(v.clone()),
            None => self.miss("generate", prompt, None),
        }
    }

    fn rollout_value(&self, state: &str, _depth: usize) -> Result<f64, PolicyError> {
        self.count("rollout");
        match lookup(&self.rollout, state) {
            Some(&v) => Ok(v),
            None => self.miss("rollout", state, Some(0.0)),
        }
    }
}

/// Rule-matching [`TextCompleter`]. Records every prompt it sees.
pub struct ScriptedBackend {
    rules: Vec<BackendRule>,
    default: Vec<String>,
    strict: bool,
    counters: Mutex<HashMap<usize, usize>>,
    pub prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<BackendRule>, default: Vec<String>, strict: bool) -> Self {
        Self {
            rules,
            default,
            strict,
            counters: Mutex::new(HashMap::new()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn fixed(text: &str) -> Self {
        Self::new(Vec::new(), vec![text.to_string()], false)
    }

    pub fn from_fixture(fixture: &PolicyFixture) -> Result<Self, PolicyError> {
        match fixture {
            PolicyFixture::Backend {
                rules,
                default,
                strict,
            } => Ok(Self::new(rules.clone(), default.clone(), *strict)),
            PolicyFixture::Fixed { text } => Ok(Self::fixed(text)),
            _ => Err(PolicyError::BadInput(
                "fixture mode is not a scripted backend".into(),
            )),
        }
    }

    pub fn seen_prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl TextCompleter for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, PolicyError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let rule = self
            .rules
            .iter()
            .position(|r| prompt.contains(&r.contains));
        let (idx, replies) = match rule {
            Some(i) => (i, &self.rules[i].replies),
            None if !self.default.is_empty() && !self.strict => (usize::MAX, &self.default),
            None => {
                return Err(PolicyError::UnscriptedQuery(format!(
                    "no rule matches prompt: {:?}...",
                    prompt.chars().take(80).collect::<String>()
                )))
            }
        };
        let mut counters = self.counters.lock().unwrap();
        let n = counters.entry(idx).or_insert(0);
        let reply = replies[*n % replies.len()].clone();
        *n += 1;
        Ok(reply)
    }
}

/// Answers block-stacking evaluation prompts by exact search, but only
/// honestly when `sentinel` occurs in the prompt; otherwise the label is
/// inverted. A search guided by a guideline carrying the sentinel then
/// beats the same search without it.
pub struct GuidelineSensitiveBackend {
    sentinel: String,
    oracles: Mutex<HashMap<String, DistanceOracle>>,
    pub prompts: Mutex<Vec<String>>,
}

impl GuidelineSensitiveBackend {
    pub fn new(sentinel: &str) -> Self {
        Self {
            sentinel: sentinel.to_string(),
            oracles: Mutex::new(HashMap::new()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    fn honest_label(&self, state: &BlocksState, action_text: &str) -> Result<bool, PolicyError> {
        let action =
            blocks::parse_action(action_text).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let mut key: Vec<String> = state.blocks();
        key.sort();
        let key = format!("{}|{}", key.join(","), blocks::render_goal(&state.goal));
        let mut oracles = self.oracles.lock().unwrap();
        if !oracles.contains_key(&key) {
            let oracle =
                DistanceOracle::new(state).map_err(|e| PolicyError::BadInput(e.to_string()))?;
            oracles.insert(key.clone(), oracle);
        }
        let oracle = oracles.get(&key).unwrap();
        let d = oracle
            .distance(state)
            .map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let next = blocks::apply(state, &action).map_err(|e| PolicyError::BadInput(e.to_string()))?;
        let d_next = oracle
            .distance(&next)
            .map_err(|e| PolicyError::BadInput(e.to_string()))?;
        Ok(d_next < d)
    }
}

/// Pulls the trailing query (last `[STATEMENT]` block and `[ACTION]` line)
/// out of an assembled evaluation prompt.
fn parse_query(prompt: &str) -> Result<(BlocksState, String), PolicyError> {
    let start = prompt
        .rfind("[STATEMENT]")
        .ok_or_else(|| PolicyError::BadInput("no [STATEMENT] section in prompt".into()))?;
    let tail = &prompt[start + "[STATEMENT]".len()..];
    let (statement, rest) = tail
        .split_once("[ACTION]")
        .ok_or_else(|| PolicyError::BadInput("no [ACTION] section in prompt".into()))?;
    let action = rest
        .split("[EVALUATION]")
        .next()
        .unwrap_or(rest)
        .trim()
        .to_string();
    let state = blocks::parse_statement(statement.trim())
        .map_err(|e| PolicyError::BadInput(e.to_string()))?;
    Ok((state, action))
}

impl TextCompleter for GuidelineSensitiveBackend {
    fn complete(&self, prompt: &str) -> Result<String, PolicyError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let (state, action) = parse_query(prompt)?;
        let honest = self.honest_label(&state, &action)?;
        let label = if prompt.contains(&self.sentinel) {
            honest
        } else {
            !honest
        };
        Ok(if label { "good" } else { "bad" }.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_policy_round_trips_fixture_json() {
        let json = r#"{
            "mode": "script",
            "score": {"s\n=>\na": 0.75},
            "default_score": 0.5
        }"#;
        let p = ScriptedPolicy::from_fixture(&PolicyFixture::from_json(json).unwrap()).unwrap();
        assert_eq!(p.score_action("s", "a").unwrap(), 0.75);
        assert_eq!(p.score_action("s", "b").unwrap(), 0.5);
        assert_eq!(p.call_count("score"), 2);
    }

    #[test]
    fn strict_policy_rejects_unscripted_queries() {
        let json = r#"{"mode": "script", "strict": true}"#;
        let p = ScriptedPolicy::from_fixture(&PolicyFixture::from_json(json).unwrap()).unwrap();
        assert!(matches!(
            p.score_action("s", "a"),
            Err(PolicyError::UnscriptedQuery(_))
        ));
    }

    #[test]
    fn digest_keys_match_plain_lookups() {
        let key = pair_key("state text", "action text");
        let mut score = HashMap::new();
        score.insert(digest_key(&key), 0.9);
        assert_eq!(lookup(&score, &key), Some(&0.9));
    }

    #[test]
    fn backend_cycles_replies_per_rule() {
        let b = ScriptedBackend::new(
            vec![BackendRule {
                contains: "pick up".into(),
                replies: vec!["good".into(), "good".into(), "bad".into()],
            }],
            vec!["bad".into()],
            false,
        );
        let labels: Vec<String> = (0..4)
            .map(|_| b.complete("eval: pick up the red block").unwrap())
            .collect();
        assert_eq!(labels, ["good", "good", "bad", "good"]);
        assert_eq!(b.complete("something else").unwrap(), "bad");
        assert_eq!(b.seen_prompts().len(), 5);
    }

    #[test]
    fn sentinel_flips_the_label() {
        let state = blocks::parse_statement(
            "As initial conditions I have that, the red block is clear, the hand is empty and the red block is on the table.\nMy goal is to have that the red block is on the table.",
        )
        .unwrap();
        // One block already at goal: every action moves away from the goal.
        let prompt_base = format!(
            "[STATEMENT]\n{}\n[ACTION]\npick up the red block\n[EVALUATION]\n",
            blocks::render_statement(&state)
        );
        let b = GuidelineSensitiveBackend::new("heed the stacking order");
        assert_eq!(b.complete(&prompt_base).unwrap(), "good");
        let honest = format!("heed the stacking order\n\n{prompt_base}");
        assert_eq!(b.complete(&honest).unwrap(), "bad");
    }
}
