//! Policy models: the interface the search procedures talk to, plus the
//! concrete implementations (prompted chat backend, scripted mocks, exact
//! oracle).
//!
//! All model interaction is textual: states and actions cross this boundary
//! as their canonical renders. Nothing outside this module constructs
//! network requests.

use thiserror::Error;

pub mod backend;
pub mod mock;
pub mod oracle_policy;
pub mod prompt;
pub mod prompted;

pub use backend::{chat_complete, BackendConfig, ChatClient, ChatMessage, ChatRequest, ChatTransport, FixtureTransport, HttpTransport};
pub use mock::{GuidelineSensitiveBackend, PolicyFixture, ScriptedBackend, ScriptedPolicy};
pub use oracle_policy::OraclePolicy;
pub use prompt::{assemble_prompt, PromptBundle, TemplateStore};
pub use prompted::{ActiveGuideline, BlocksPromptPolicy, DecompPromptPolicy, PromptTap};

#[derive(Debug, Error, Clone)]
pub enum PolicyError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("unscripted query: {0}")]
    UnscriptedQuery(String),
    #[error("unfilled prompt placeholder: {0}")]
    MissingSlot(String),
    #[error("unknown prompt template: {0}")]
    UnknownTemplate(String),
    #[error("operation not supported by this policy: {0}")]
    Unsupported(&'static str),
    #[error("policy input could not be parsed: {0}")]
    BadInput(String),
}

/// The three model roles used during search (action proposal, action
/// scoring, next-state prediction) plus rollout estimation and free-form
/// generation.
///
/// Implementations must be deterministic for a fixed backend seed and a
/// fixed guideline set, and safe for concurrent calls.
pub trait PolicyModel: Send + Sync {
    /// Up to `k` distinct candidate actions for a state.
    fn propose_actions(&self, state: &str, k: usize) -> Result<Vec<String>, PolicyError>;

    /// Estimated quality of taking `action` in `state`, in [0, 1].
    fn score_action(&self, state: &str, action: &str) -> Result<f64, PolicyError>;

    /// Textual outcome of taking `action` in `state`. For decomposition
    /// tasks this is the generated subanswer.
    fn predict_next_state(&self, state: &str, action: &str) -> Result<String, PolicyError>;

    /// Free-form completion of a fully assembled prompt.
    fn generate(&self, prompt: &str) -> Result<String, PolicyError>;

    /// Value estimate for a state via a depth-bounded rollout, in [0, 1].
    fn rollout_value(&self, state: &str, depth: usize) -> Result<f64, PolicyError>;
}

/// A backend capable of completing a single prompt into text.
pub trait TextCompleter: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, PolicyError>;
}

/// Maps a completion onto the positive ("good"/"yes") or negative
/// ("bad"/"no") label by a case-insensitive prefix match on the first
/// alphabetic token.
pub fn parse_label(completion: &str) -> Result<bool, PolicyError> {
    let token: String = completion
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if token.starts_with("good") || token.starts_with("yes") {
        Ok(true)
    } else if token.starts_with("bad") || token.starts_with("no") {
        Ok(false)
    } else {
        Err(PolicyError::MalformedResponse(format!(
            "neither label parseable from: {completion:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing_is_prefix_and_case_insensitive() {
        assert!(parse_label("Good move.").unwrap());
        assert!(parse_label("YES").unwrap());
        assert!(!parse_label("bad").unwrap());
        assert!(!parse_label("  No, because...").unwrap());
        assert!(parse_label("maybe").is_err());
    }
}
