//! Run configuration: the manifest file that fully describes one search
//! run, and its validation.
//!
//! Manifests are flat JSON. Method-specific knobs are optional in the
//! file but validated against the chosen method, so a beam search without
//! a beam width fails up front with the field named.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use arbor_core::env::oracle::GeneratorSpec;
use arbor_core::policy::BackendConfig;
use arbor_core::reflection::SelectionMode;
use arbor_core::SearchConfig;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest field `{field}` is required for method `{method}`")]
    MissingField {
        field: &'static str,
        method: &'static str,
    },
    #[error("manifest could not be parsed: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Blocksworld,
    Decomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Single greedy chain.
    Cot,
    /// Several sampled chains with a majority vote.
    CotSc,
    Bfs,
    Mcts,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Cot => "cot",
            Method::CotSc => "cot_sc",
            Method::Bfs => "bfs",
            Method::Mcts => "mcts",
        }
    }
}

/// Search knobs as written in the manifest; everything is optional and
/// merged over [`SearchConfig::default`] after validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOverrides {
    pub beam_width: Option<usize>,
    pub depth_limit: Option<usize>,
    pub mcts_iterations: Option<usize>,
    pub exploration_constant: Option<f64>,
    pub rollout_depth: Option<usize>,
    pub samples_per_action_score: Option<usize>,
    pub temperature: Option<f64>,
    pub random_seed: Option<u64>,
}

impl SearchOverrides {
    pub fn to_config(&self) -> SearchConfig {
        let d = SearchConfig::default();
        SearchConfig {
            beam_width: self.beam_width.unwrap_or(d.beam_width),
            depth_limit: self.depth_limit.unwrap_or(d.depth_limit),
            mcts_iterations: self.mcts_iterations.unwrap_or(d.mcts_iterations),
            exploration_constant: self.exploration_constant.unwrap_or(d.exploration_constant),
            rollout_depth: self.rollout_depth.unwrap_or(d.rollout_depth),
            samples_per_action_score: self
                .samples_per_action_score
                .unwrap_or(d.samples_per_action_score),
            temperature: self.temperature.unwrap_or(d.temperature),
            random_seed: self.random_seed.unwrap_or(d.random_seed),
        }
    }
}

/// Where model completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Live chat endpoint.
    Http { config: BackendConfig },
    /// Scripted fixture file (see the policy fixture JSON schema).
    Fixture { path: PathBuf },
    /// Exact-distance test policy; valid for the blocksworld task only.
    Oracle,
    /// Honest labels only when `sentinel` appears in the prompt.
    GuidelineSensitive { sentinel: String },
}

/// Which problems to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    /// JSON file: an array of blocksworld instances or of decomposition
    /// problems, matching the task.
    File { path: PathBuf },
    /// Generated step-balanced blocksworld suite.
    Generator { specs: Vec<GeneratorSpec> },
}

fn default_selection() -> SelectionMode {
    SelectionMode::Important { lambda: 0.1 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: Task,
    pub method: Method,
    #[serde(default)]
    pub search: SearchOverrides,
    pub backend: BackendSpec,
    /// Path to a stored guideline file to inject into every prompt.
    #[serde(default)]
    pub guideline: Option<PathBuf>,
    #[serde(default = "default_selection")]
    pub selection: SelectionMode,
    pub output_dir: PathBuf,
    pub instances: InstanceSource,
    /// Chain samples for the self-consistency method.
    #[serde(default = "default_sc_samples")]
    pub sc_samples: usize,
    /// Method tag written to the outcome log; defaults to the method
    /// name. Lets a guided run be compared against its baseline.
    #[serde(default)]
    pub label: Option<String>,
}

fn default_sc_samples() -> usize {
    10
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let manifest: Self =
            serde_json::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ManifestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks method-specific requirements before any work starts.
    pub fn validate(&self) -> Result<(), ManifestError> {
        match self.method {
            Method::Bfs if self.search.beam_width.is_none() => Err(ManifestError::MissingField {
                field: "search.beam_width",
                method: "bfs",
            }),
            Method::Mcts if self.search.mcts_iterations.is_none() => {
                Err(ManifestError::MissingField {
                    field: "search.mcts_iterations",
                    method: "mcts",
                })
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(method: &str, search: &str) -> String {
        format!(
            r#"{{
                "task": "blocksworld",
                "method": "{method}",
                "search": {search},
                "backend": {{"kind": "oracle"}},
                "output_dir": "/tmp/run",
                "instances": {{"kind": "generator", "specs": [
                    {{"blocks": 3, "target_steps": 2, "count": 2, "seed": 1}}
                ]}}
            }}"#
        )
    }

    #[test]
    fn bfs_without_beam_width_names_the_field() {
        let err = RunManifest::from_json(&manifest("bfs", "{}")).unwrap_err();
        assert!(err
            .to_string()
            .contains("`search.beam_width` is required for method `bfs`"));
    }

    #[test]
    fn mcts_without_iterations_names_the_field() {
        let err = RunManifest::from_json(&manifest("mcts", "{}")).unwrap_err();
        assert!(err.to_string().contains("search.mcts_iterations"));
    }

    #[test]
    fn valid_manifest_round_trips() {
        let m = RunManifest::from_json(&manifest("bfs", r#"{"beam_width": 5}"#)).unwrap();
        assert_eq!(m.search.to_config().beam_width, 5);
        let back = RunManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn chain_methods_need_no_search_overrides() {
        assert!(RunManifest::from_json(&manifest("cot", "{}")).is_ok());
        assert!(RunManifest::from_json(&manifest("cot_sc", "{}")).is_ok());
    }
}
