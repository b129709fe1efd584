//! Prompt templates and assembly.
//!
//! Templates are text assets with named placeholders (`{guideline}`,
//! `{demos}`, `{query}`). Assembly is byte-deterministic and places the
//! guideline, when present, exactly once at its marker: after the task
//! preamble, before the few-shot demonstrations.

use std::collections::HashMap;
use std::path::Path;

use super::PolicyError;

const BUILTIN_TEMPLATES: [(&str, &str); 8] = [
    (
        "blocks_action_eval",
        include_str!("../../templates/blocks_action_eval.txt"),
    ),
    (
        "decomp_propose",
        include_str!("../../templates/decomp_propose.txt"),
    ),
    (
        "decomp_usefulness",
        include_str!("../../templates/decomp_usefulness.txt"),
    ),
    (
        "decomp_answer",
        include_str!("../../templates/decomp_answer.txt"),
    ),
    (
        "decomp_final",
        include_str!("../../templates/decomp_final.txt"),
    ),
    (
        "reflect_state",
        include_str!("../../templates/reflect_state.txt"),
    ),
    (
        "reflect_merge",
        include_str!("../../templates/reflect_merge.txt"),
    ),
    (
        "reflect_problem",
        include_str!("../../templates/reflect_problem.txt"),
    ),
];

const SLOTS: [&str; 4] = ["{preamble}", "{guideline}", "{demos}", "{query}"];

/// Named prompt templates, seeded with the built-in assets and optionally
/// overridden from a directory of `.txt` files (file stem = template id).
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: HashMap<String, String>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateStore {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN_TEMPLATES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    /// Loads every `*.txt` file under `dir` as an override.
    pub fn load_overrides(&mut self, dir: &Path) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    let text = std::fs::read_to_string(&path)?;
                    self.templates.insert(stem.to_string(), text);
                }
            }
        }
        Ok(())
    }
}

/// Everything needed to render one prompt.
#[derive(Debug, Clone, Default)]
pub struct PromptBundle {
    pub template_id: String,
    /// Few-shot demonstrations, in order (the default experiment setup
    /// uses 4).
    pub demos: Vec<String>,
    pub guideline: Option<String>,
    pub query: String,
}

/// Renders a bundle against its template.
///
/// Ordering is task preamble, guideline (if any), demos, query. Absent
/// guidelines leave no marker residue; an unfillable placeholder is a
/// [`PolicyError::MissingSlot`].
pub fn assemble_prompt(bundle: &PromptBundle, store: &TemplateStore) -> Result<String, PolicyError> {
    let template = store
        .get(&bundle.template_id)
        .ok_or_else(|| PolicyError::UnknownTemplate(bundle.template_id.clone()))?;
    if bundle.guideline.is_some() && !template.contains("{guideline}") {
        return Err(PolicyError::MissingSlot("guideline".into()));
    }
    let guideline = bundle
        .guideline
        .as_ref()
        .map(|g| format!("{g}\n\n"))
        .unwrap_or_default();
    let demos = if bundle.demos.is_empty() {
        String::new()
    } else {
        format!("{}\n\n", bundle.demos.join("\n\n"))
    };
    let rendered = template
        .replace("{guideline}", &guideline)
        .replace("{demos}", &demos)
        .replace("{query}", &bundle.query);
    for slot in SLOTS {
        if rendered.contains(slot) {
            return Err(PolicyError::MissingSlot(
                slot.trim_matches(['{', '}']).to_string(),
            ));
        }
    }
    Ok(rendered)
}
