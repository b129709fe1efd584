//! Turning finished search trees into reusable guidelines.
//!
//! The pipeline has three stages: select decision points worth reviewing
//! from serialized trees, summarize each one into a short guideline with
//! a reflector model, and merge the per-state guidelines into a single
//! one that later runs inject into their prompts.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::policy::prompt::{assemble_prompt, PromptBundle, TemplateStore};
use crate::policy::{PolicyError, TextCompleter};
use crate::tree::{NodeId, TreeDump};

pub mod store;

pub use store::GuidelineStore;

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("no states were selected for reflection")]
    NothingSelected,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("guideline store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("guideline file {0} failed its checksum")]
    CorruptStore(String),
    #[error("no stored guideline found")]
    NotFound,
}

/// One explored action at a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: String,
    pub next_state: String,
    pub next_value: f64,
}

/// A state picked for review, with everything the reflector sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportantStateRecord {
    pub tree_id: String,
    pub node: NodeId,
    pub state: String,
    /// Largest value swing among visited children.
    pub importance: f64,
    /// Best action first; ties ordered by action text.
    pub actions: Vec<ActionOutcome>,
}

/// How decision points are chosen from finished trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionMode {
    /// States whose importance exceeds the threshold.
    Important { lambda: f64 },
    /// A fixed number of candidate states drawn uniformly.
    Random { count: usize, seed: u64 },
    /// Every candidate state.
    All,
    /// No states at all; reflect over the problem statements instead.
    ProblemOnly,
}

/// What a reflection round works from.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub records: Vec<ImportantStateRecord>,
    /// Root statements, only populated in problem-only mode.
    pub problems: Vec<String>,
}

/// All states eligible for reflection: nodes with at least one visited
/// child. Unvisited children carry no propagated signal and are ignored,
/// both here and in the importance score.
fn candidate_records(dump: &TreeDump) -> Vec<ImportantStateRecord> {
    let mut records = Vec::new();
    for node in &dump.nodes {
        let mut actions: Vec<ActionOutcome> = node
            .children
            .iter()
            .map(|&c| &dump.nodes[c])
            .filter(|c| c.visits > 0)
            .map(|c| ActionOutcome {
                action: c.action.clone().unwrap_or_default(),
                next_state: c.state.clone(),
                next_value: c.v,
            })
            .collect();
        if actions.is_empty() {
            continue;
        }
        let importance = actions
            .iter()
            .map(|a| (a.next_value - node.v).abs())
            .fold(f64::NEG_INFINITY, f64::max);
        actions.sort_by(|a, b| {
            b.next_value
                .partial_cmp(&a.next_value)
                .unwrap()
                .then_with(|| a.action.cmp(&b.action))
        });
        records.push(ImportantStateRecord {
            tree_id: dump.tree_id.clone(),
            node: node.id,
            state: node.state.clone(),
            importance,
            actions,
        });
    }
    records
}

/// States whose importance (the largest absolute value change from the
/// state to a visited child) exceeds `lambda`.
pub fn select_important_states(dump: &TreeDump, lambda: f64) -> Vec<ImportantStateRecord> {
    candidate_records(dump)
        .into_iter()
        .filter(|r| r.importance > lambda)
        .collect()
}

pub fn select_for_mode(dumps: &[TreeDump], mode: &SelectionMode) -> Selection {
    match mode {
        SelectionMode::Important { lambda } => Selection {
            records: dumps
                .iter()
                .flat_map(|d| select_important_states(d, *lambda))
                .collect(),
            problems: Vec::new(),
        },
        SelectionMode::All => Selection {
            records: dumps.iter().flat_map(candidate_records).collect(),
            problems: Vec::new(),
        },
        SelectionMode::Random { count, seed } => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut all: Vec<ImportantStateRecord> =
                dumps.iter().flat_map(candidate_records).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
            all.shuffle(&mut rng);
            all.truncate(*count);
            Selection {
                records: all,
                problems: Vec::new(),
            }
        }
        SelectionMode::ProblemOnly => Selection {
            records: Vec::new(),
            problems: dumps.iter().map(|d| d.root().state.clone()).collect(),
        },
    }
}

/// A summarized guideline with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guideline {
    pub text: String,
    /// 1-based refinement round.
    pub iteration: u32,
    pub sources: Vec<SourceRef>,
    pub reflector_model: String,
    pub created_at: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub tree_id: String,
    pub node: NodeId,
}

/// Reflector plus prompt assets for one round.
pub struct Reflector<'a> {
    pub completer: &'a dyn TextCompleter,
    pub templates: &'a TemplateStore,
    pub model_name: String,
    /// Batch size for hierarchical merging.
    pub merge_batch: usize,
}

impl<'a> Reflector<'a> {
    pub fn new(completer: &'a dyn TextCompleter, templates: &'a TemplateStore) -> Self {
        Self {
            completer,
            templates,
            model_name: "reflector".to_string(),
            merge_batch: 8,
        }
    }

    fn complete(&self, template_id: &str, query: String) -> Result<String, ReflectError> {
        let bundle = PromptBundle {
            template_id: template_id.to_string(),
            query,
            ..Default::default()
        };
        let prompt = assemble_prompt(&bundle, self.templates)?;
        Ok(self.completer.complete(&prompt)?)
    }
}

/// Renders one decision point for the reflector, best action first.
fn render_record(record: &ImportantStateRecord, prev_guideline: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(prev) = prev_guideline {
        out.push_str("Guideline from the previous round:\n");
        out.push_str(prev);
        out.push_str("\n\n");
    }
    out.push_str("State:\n");
    out.push_str(&record.state);
    for (i, a) in record.actions.iter().enumerate() {
        out.push_str(&format!(
            "\n\nAction {rank}: {action}\nNext state:\n{next}\nNext state value: {value:.4}",
            rank = i + 1,
            action = a.action,
            next = a.next_state,
            value = a.next_value,
        ));
    }
    out
}

/// Summarizes a single decision point into guideline text.
pub fn reflect_single(
    record: &ImportantStateRecord,
    prev_guideline: Option<&str>,
    reflector: &Reflector,
) -> Result<String, ReflectError> {
    reflector.complete("reflect_state", render_record(record, prev_guideline))
}

/// Merges guideline texts hierarchically: one call per batch, then the
/// batch results are merged the same way until one text remains.
pub fn merge_guidelines(texts: &[String], reflector: &Reflector) -> Result<String, ReflectError> {
    match texts {
        [] => Err(ReflectError::NothingSelected),
        [single] => Ok(single.clone()),
        _ => {
            let batch = reflector.merge_batch.max(2);
            if texts.len() <= batch {
                let query = texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| format!("Guideline {}:\n{}", i + 1, t))
                    .collect::<Vec<_>>()
                    .join("\n\n");
                return reflector.complete("reflect_merge", query);
            }
            let merged: Vec<String> = texts
                .chunks(batch)
                .map(|chunk| merge_guidelines(chunk, reflector))
                .collect::<Result<_, _>>()?;
            merge_guidelines(&merged, reflector)
        }
    }
}

/// One full round: select, reflect each selection, merge, package.
///
/// When a previous guideline is given its text is shown to the reflector
/// at every step and the iteration counter advances from it.
pub fn reflection_round(
    dumps: &[TreeDump],
    mode: &SelectionMode,
    prev: Option<&Guideline>,
    reflector: &Reflector,
) -> Result<Guideline, ReflectError> {
    let selection = select_for_mode(dumps, mode);
    let prev_text = prev.map(|g| g.text.as_str());
    let mut texts = Vec::new();
    let mut sources = Vec::new();
    for record in &selection.records {
        texts.push(reflect_single(record, prev_text, reflector)?);
        sources.push(SourceRef {
            tree_id: record.tree_id.clone(),
            node: record.node,
        });
    }
    for problem in &selection.problems {
        let mut query = String::new();
        if let Some(prev) = prev_text {
            query.push_str("Guideline from the previous round:\n");
            query.push_str(prev);
            query.push_str("\n\n");
        }
        query.push_str(problem);
        texts.push(reflector.complete("reflect_problem", query)?);
    }
    let text = merge_guidelines(&texts, reflector)?;
    let word_count = text.split_whitespace().count();
    Ok(Guideline {
        word_count,
        text,
        iteration: prev.map_or(1, |g| g.iteration + 1),
        sources,
        reflector_model: reflector.model_name.clone(),
        created_at: chrono::Utc::now().to_rfc3339(),
    })
}

/// Checksum over guideline text, stored alongside it on disk.
pub(crate) fn text_checksum(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mock::ScriptedBackend;
    use crate::tree::{MethodTag, NodeDump, SearchConfig};

    fn dump_with_values(values: &[(Option<NodeId>, f64, u32)]) -> TreeDump {
        // values: (parent, v, visits) per node; node 0 is the root.
        let mut nodes: Vec<NodeDump> = values
            .iter()
            .enumerate()
            .map(|(id, &(parent, v, visits))| NodeDump {
                id,
                parent,
                action: parent.map(|_| format!("a{id}")),
                state: format!("s{id}"),
                q: v,
                v,
                prior: v,
                visits,
                terminal: false,
                children: Vec::new(),
            })
            .collect();
        for id in 0..nodes.len() {
            if let Some(p) = nodes[id].parent {
                nodes[p].children.push(id);
            }
        }
        TreeDump {
            tree_id: "t0".into(),
            method: MethodTag::Mcts,
            root_id: 0,
            config: SearchConfig::default(),
            nodes,
        }
    }

    #[test]
    fn importance_is_the_largest_child_swing() {
        let dump = dump_with_values(&[
            (None, 0.5, 3),
            (Some(0), 0.9, 1),
            (Some(0), 0.45, 1),
            (Some(1), 0.95, 1),
        ]);
        let records = select_important_states(&dump, 0.1);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].node, 0);
        assert!((records[0].importance - 0.4).abs() < 1e-12);
        // Best action listed first.
        assert_eq!(records[0].actions[0].action, "a1");
    }

    #[test]
    fn unvisited_children_do_not_count() {
        let dump = dump_with_values(&[(None, 0.5, 1), (Some(0), 1.0, 0)]);
        assert!(select_important_states(&dump, 0.1).is_empty());
    }

    #[test]
    fn negative_lambda_selects_every_candidate() {
        let dump = dump_with_values(&[(None, 0.5, 2), (Some(0), 0.5, 1), (Some(0), 0.5, 1)]);
        assert_eq!(select_important_states(&dump, -0.001).len(), 1);
        assert!(select_important_states(&dump, 0.0).is_empty());
    }

    #[test]
    fn merge_batches_hierarchically() {
        let backend = ScriptedBackend::fixed("merged");
        let templates = TemplateStore::builtin();
        let reflector = Reflector::new(&backend, &templates);
        let texts: Vec<String> = (0..50).map(|i| format!("g{i}")).collect();
        let merged = merge_guidelines(&texts, &reflector).unwrap();
        assert_eq!(merged, "merged");
        // 50 texts in batches of 8: 7 batch calls, then 1 merge of the 7.
        assert_eq!(backend.seen_prompts().len(), 8);
    }

    #[test]
    fn single_guideline_merges_without_a_call() {
        let backend = ScriptedBackend::fixed("merged");
        let templates = TemplateStore::builtin();
        let reflector = Reflector::new(&backend, &templates);
        let out = merge_guidelines(&["only".to_string()], &reflector).unwrap();
        assert_eq!(out, "only");
        assert!(backend.seen_prompts().is_empty());
    }

    #[test]
    fn rounds_chain_iterations_and_show_the_previous_text() {
        let dump = dump_with_values(&[(None, 0.2, 2), (Some(0), 0.9, 1)]);
        let backend = ScriptedBackend::fixed("round two text");
        let templates = TemplateStore::builtin();
        let reflector = Reflector::new(&backend, &templates);
        let prev = Guideline {
            text: "round one text".into(),
            iteration: 1,
            sources: Vec::new(),
            reflector_model: "reflector".into(),
            created_at: "2026-01-01T00:00:00+00:00".into(),
            word_count: 3,
        };
        let mode = SelectionMode::Important { lambda: 0.1 };
        let next = reflection_round(&[dump], &mode, Some(&prev), &reflector).unwrap();
        assert_eq!(next.iteration, 2);
        assert_eq!(next.text, "round two text");
        assert!(backend.seen_prompts()[0].contains("round one text"));
    }

    #[test]
    fn problem_only_mode_reads_the_roots() {
        let dump = dump_with_values(&[(None, 0.2, 1), (Some(0), 0.9, 1)]);
        let selection = select_for_mode(&[dump], &SelectionMode::ProblemOnly);
        assert!(selection.records.is_empty());
        assert_eq!(selection.problems, vec!["s0".to_string()]);
    }

    #[test]
    fn random_selection_is_seed_deterministic() {
        let dump = dump_with_values(&[
            (None, 0.1, 4),
            (Some(0), 0.2, 1),
            (Some(0), 0.3, 1),
            (Some(1), 0.4, 1),
            (Some(2), 0.5, 1),
        ]);
        let mode = SelectionMode::Random { count: 2, seed: 7 };
        let a = select_for_mode(std::slice::from_ref(&dump), &mode);
        let b = select_for_mode(std::slice::from_ref(&dump), &mode);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 2);
    }
}
