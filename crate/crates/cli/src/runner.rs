//! Command implementations behind the CLI: search runs, reflection
//! rounds, evaluation, the planning oracle, and tree replay.
//!
//! A search run produces a self-describing directory: `manifest.json`
//! (the exact configuration), `trees/NNN.json` (one serialized tree per
//! instance), and `outcomes.jsonl`. Re-running evaluation from that
//! directory alone reproduces the original report.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use arbor_core::env::blocks::{self, BlocksEnv, BlocksInstance};
use arbor_core::env::oracle::{generate_instances, min_plan_length};
use arbor_core::env::{DecompositionEnv, Environment};
use arbor_core::metrics::{
    auc, read_outcomes, self_consistency_vote, step_partitioned_report, write_outcomes,
    IterationCurve, RunOutcome,
};
use arbor_core::policy::mock::{GuidelineSensitiveBackend, PolicyFixture, ScriptedBackend, ScriptedPolicy};
use arbor_core::policy::prompt::TemplateStore;
use arbor_core::policy::prompted::{ActiveGuideline, BlocksPromptPolicy, DecompPromptPolicy, PromptTap};
use arbor_core::policy::{ChatClient, OraclePolicy, PolicyModel, TextCompleter};
use arbor_core::reflection::{
    reflection_round, select_for_mode, GuidelineStore, Reflector, SelectionMode,
};
use arbor_core::search::SearchOutcome;
use arbor_core::{beam_bfs, mcts_search, sample_chain, SearchConfig, TreeDump};

use crate::manifest::{BackendSpec, InstanceSource, Method, RunManifest, Task};

/// Four worked evaluation examples shown before every blocksworld query.
const BLOCKS_DEMOS: [&str; 4] = [
    "[STATEMENT]\nAs initial conditions I have that, the red block is clear, the blue block is clear, the hand is empty, the red block is on the table and the blue block is on the table.\nMy goal is to have that the red block is on top of the blue block.\n[ACTION]\npick up the red block\n[EVALUATION]\ngood",
    "[STATEMENT]\nAs initial conditions I have that, the red block is clear, the blue block is clear, the hand is empty, the red block is on the table and the blue block is on the table.\nMy goal is to have that the red block is on top of the blue block.\n[ACTION]\npick up the blue block\n[EVALUATION]\nbad",
    "[STATEMENT]\nAs initial conditions I have that, the yellow block is clear, the hand is empty, the yellow block is on top of the orange block and the orange block is on the table.\nMy goal is to have that the orange block is on top of the yellow block.\n[ACTION]\nunstack the yellow block from on top of the orange block\n[EVALUATION]\ngood",
    "[STATEMENT]\nAs initial conditions I have that, the hand is holding the yellow block, the orange block is clear and the orange block is on the table.\nMy goal is to have that the orange block is on top of the yellow block.\n[ACTION]\nstack the yellow block on top of the orange block\n[EVALUATION]\nbad",
];

/// One decomposition problem as stored in an instance file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompProblem {
    pub id: String,
    pub problem: String,
    #[serde(default)]
    pub gold_answer: Option<String>,
}

/// Either a ready policy or a raw completer to wrap per task.
enum BackendHandle {
    Policy(Arc<dyn PolicyModel>),
    Completer(Arc<dyn TextCompleter>),
}

fn open_backend(spec: &BackendSpec) -> Result<BackendHandle> {
    Ok(match spec {
        BackendSpec::Http { config } => {
            BackendHandle::Completer(Arc::new(ChatClient::from_env(config.clone())?))
        }
        BackendSpec::Oracle => BackendHandle::Policy(Arc::new(OraclePolicy::new())),
        BackendSpec::GuidelineSensitive { sentinel } => {
            BackendHandle::Completer(Arc::new(GuidelineSensitiveBackend::new(sentinel)))
        }
        BackendSpec::Fixture { path } => {
            let fixture = PolicyFixture::load(path)
                .with_context(|| format!("loading fixture {}", path.display()))?;
            match &fixture {
                PolicyFixture::Script { .. } => {
                    BackendHandle::Policy(Arc::new(ScriptedPolicy::from_fixture(&fixture)?))
                }
                _ => BackendHandle::Completer(Arc::new(ScriptedBackend::from_fixture(&fixture)?)),
            }
        }
    })
}

fn completer_backend(spec: &BackendSpec) -> Result<Arc<dyn TextCompleter>> {
    match open_backend(spec)? {
        BackendHandle::Completer(c) => Ok(c),
        BackendHandle::Policy(_) => bail!("this backend cannot serve free-form completions"),
    }
}

/// Assembles the policy for a run, wiring in the active guideline and an
/// optional prompt tap.
pub fn build_policy(
    manifest: &RunManifest,
    guideline: Arc<ActiveGuideline>,
    tap: Option<PromptTap>,
) -> Result<Arc<dyn PolicyModel>> {
    let samples = manifest.search.to_config().samples_per_action_score;
    match (open_backend(&manifest.backend)?, manifest.task) {
        (BackendHandle::Policy(p), _) => Ok(p),
        (BackendHandle::Completer(c), Task::Blocksworld) => {
            let demos = BLOCKS_DEMOS.iter().map(|d| d.to_string()).collect();
            let mut policy =
                BlocksPromptPolicy::new(c, TemplateStore::builtin(), guideline, demos, samples);
            if let Some(tap) = tap {
                policy = policy.with_tap(tap);
            }
            Ok(Arc::new(policy))
        }
        (BackendHandle::Completer(c), Task::Decomposition) => {
            let mut policy = DecompPromptPolicy::new(c, TemplateStore::builtin(), guideline, samples);
            if let Some(tap) = tap {
                policy = policy.with_tap(tap);
            }
            Ok(Arc::new(policy))
        }
    }
}

fn run_method<E: Environment>(
    method: Method,
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
) -> Result<SearchOutcome<E::State, E::Action>> {
    Ok(match method {
        Method::Bfs => beam_bfs(env, policy, config)?,
        Method::Mcts => mcts_search(env, policy, config)?,
        Method::Cot | Method::CotSc => sample_chain(env, policy, config)?,
    })
}

struct InstanceResult {
    dump: TreeDump,
    outcome: RunOutcome,
}

/// Runs one instance, including the self-consistency vote for `cot_sc`.
fn run_instance<E: Environment>(
    manifest: &RunManifest,
    env: &E,
    policy: &dyn PolicyModel,
    config: &SearchConfig,
    instance_id: &str,
    steps_required: Option<u32>,
    answer_of: impl Fn(&E::State) -> String,
    correct_of: impl Fn(&E::State) -> bool,
) -> Result<InstanceResult> {
    let start = Instant::now();
    let (dump, correct) = if manifest.method == Method::CotSc {
        let mut answers = Vec::new();
        let mut runs = Vec::new();
        for i in 0..manifest.sc_samples.max(1) {
            let cfg = SearchConfig {
                random_seed: config.random_seed.wrapping_add(i as u64),
                ..config.clone()
            };
            let out = run_method(manifest.method, env, policy, &cfg)?;
            answers.push(answer_of(&out.final_state));
            runs.push(out);
        }
        let voted = self_consistency_vote(&answers, answers.len())?;
        let chosen = answers.iter().position(|a| *a == voted).unwrap();
        let correct = correct_of(&runs[chosen].final_state);
        (dump_outcome(env, &runs[chosen], instance_id), correct)
    } else {
        let out = run_method(manifest.method, env, policy, config)?;
        let correct = correct_of(&out.final_state);
        (dump_outcome(env, &out, instance_id), correct)
    };
    let outcome = RunOutcome {
        instance_id: instance_id.to_string(),
        method: manifest
            .label
            .clone()
            .unwrap_or_else(|| manifest.method.tag().to_string()),
        correct,
        steps_required,
        iterations_used: config.mcts_iterations as u32,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    Ok(InstanceResult { dump, outcome })
}

fn dump_outcome<E: Environment>(
    env: &E,
    out: &SearchOutcome<E::State, E::Action>,
    tree_id: &str,
) -> TreeDump {
    out.tree.dump(
        tree_id,
        |s| env.render_state(s),
        |a| env.render_action(a),
    )
}

fn load_blocks_instances(source: &InstanceSource) -> Result<Vec<BlocksInstance>> {
    match source {
        InstanceSource::File { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading instance file {}", path.display()))?;
            Ok(serde_json::from_str(&text)?)
        }
        InstanceSource::Generator { specs } => {
            let mut out = Vec::new();
            for spec in specs {
                for mut inst in generate_instances(spec)? {
                    inst.id = format!("s{}-{}", spec.target_steps, inst.id);
                    out.push(inst);
                }
            }
            Ok(out)
        }
    }
}

fn load_decomp_problems(source: &InstanceSource) -> Result<Vec<DecompProblem>> {
    match source {
        InstanceSource::File { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading instance file {}", path.display()))?;
            Ok(serde_json::from_str(&text)?)
        }
        InstanceSource::Generator { .. } => {
            bail!("decomposition instances cannot be generated; provide a file")
        }
    }
}

/// Runs the manifest end to end and returns the printed summary.
pub fn cmd_search(manifest: &RunManifest) -> Result<String> {
    manifest.validate()?;
    let trees_dir = manifest.output_dir.join("trees");
    std::fs::create_dir_all(&trees_dir)?;
    std::fs::write(manifest.output_dir.join("manifest.json"), manifest.to_json())?;

    let guideline = ActiveGuideline::new();
    if let Some(path) = &manifest.guideline {
        let stored = GuidelineStore::load_file(path)?;
        guideline.set(stored.text);
    }
    let policy = build_policy(manifest, guideline, None)?;
    let base_config = manifest.search.to_config();

    let mut results = Vec::new();
    match manifest.task {
        Task::Blocksworld => {
            for instance in load_blocks_instances(&manifest.instances)? {
                let env = BlocksEnv::from_instance(&instance);
                let steps = match instance.steps {
                    Some(s) => Some(s),
                    None => min_plan_length(&instance.to_state()).ok(),
                };
                let mut config = base_config.clone();
                if manifest.search.depth_limit.is_none() {
                    // Two spare moves beyond the optimum by default.
                    config.depth_limit = steps.map_or(10, |s| s as usize + 2);
                }
                results.push(run_instance(
                    manifest,
                    &env,
                    policy.as_ref(),
                    &config,
                    &instance.id,
                    steps,
                    |s| blocks::render_statement(s),
                    |s| s.goal_satisfied(),
                )?);
            }
        }
        Task::Decomposition => {
            for problem in load_decomp_problems(&manifest.instances)? {
                let mut env = DecompositionEnv::new(problem.problem.clone(), policy.clone());
                if let Some(gold) = &problem.gold_answer {
                    env = env.with_gold_answer(gold.clone());
                }
                let gold = problem.gold_answer.clone();
                results.push(run_instance(
                    manifest,
                    &env,
                    policy.as_ref(),
                    &base_config,
                    &problem.id,
                    None,
                    |s| s.final_answer.clone().unwrap_or_default(),
                    |s| match (&s.final_answer, &gold) {
                        (Some(a), Some(g)) => {
                            use arbor_core::env::decomp::extract_last_number as num;
                            matches!((num(a), num(g)), (Some(x), Some(y)) if (x - y).abs() < 1e-6)
                        }
                        _ => false,
                    },
                )?);
            }
        }
    }

    let outcomes_path = manifest.output_dir.join("outcomes.jsonl");
    if outcomes_path.exists() {
        std::fs::remove_file(&outcomes_path)?;
    }
    let outcomes: Vec<RunOutcome> = results.iter().map(|r| r.outcome.clone()).collect();
    write_outcomes(&outcomes_path, &outcomes)?;
    for (i, result) in results.iter().enumerate() {
        std::fs::write(
            trees_dir.join(format!("{i:03}.json")),
            result.dump.to_json(),
        )?;
    }

    Ok(step_partitioned_report(&outcomes).render_text())
}

fn load_trace_trees(trace_dir: &Path) -> Result<Vec<TreeDump>> {
    let trees_dir = trace_dir.join("trees");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&trees_dir)
        .with_context(|| format!("reading trace directory {}", trees_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("trace directory {} holds no trees", trees_dir.display());
    }
    paths
        .iter()
        .map(|p| Ok(TreeDump::from_json(&std::fs::read_to_string(p)?)?))
        .collect()
}

/// One reflection round over a finished trace directory. Returns the
/// number of selected states and the stored guideline path.
pub fn cmd_reflect(
    trace_dir: &Path,
    mode: &SelectionMode,
    backend: &BackendSpec,
    prev: Option<&Path>,
) -> Result<(usize, PathBuf)> {
    let dumps = load_trace_trees(trace_dir)?;
    let completer = completer_backend(backend)?;
    let templates = TemplateStore::builtin();
    let reflector = Reflector::new(completer.as_ref(), &templates);
    let prev = prev.map(GuidelineStore::load_file).transpose()?;

    let selection = select_for_mode(&dumps, mode);
    let selected = selection.records.len();
    let guideline = reflection_round(&dumps, mode, prev.as_ref(), &reflector)?;
    let store = GuidelineStore::new(trace_dir.join("guidelines"))?;
    let path = store.save(&guideline)?;
    Ok((selected, path))
}

/// Merges outcome logs into one report; optionally annotates relative
/// improvement of `guided` over `baseline`, and appends the normalized
/// area under the per-directory accuracy curve when requested.
pub fn cmd_evaluate(
    dirs: &[PathBuf],
    compare: Option<(&str, &str)>,
    curve: bool,
) -> Result<String> {
    let mut outcomes = Vec::new();
    let mut per_dir_accuracy = Vec::new();
    for dir in dirs {
        let batch = read_outcomes(&dir.join("outcomes.jsonl"))
            .with_context(|| format!("reading outcomes in {}", dir.display()))?;
        if batch.is_empty() {
            bail!("no outcomes in {}", dir.display());
        }
        let correct = batch.iter().filter(|o| o.correct).count();
        per_dir_accuracy.push(correct as f64 / batch.len() as f64);
        outcomes.extend(batch);
    }
    let mut report = step_partitioned_report(&outcomes);
    if let Some((baseline, guided)) = compare {
        report = report.with_compare(baseline, guided);
    }
    let mut text = report.render_text();
    if curve {
        let curve = IterationCurve::from_accuracies(&per_dir_accuracy)?;
        text.push_str(&format!("iteration-accuracy auc: {:.4}\n", auc(&curve)?));
    }
    Ok(text)
}

/// Prints optimal plan lengths, or generates and verifies an instance
/// suite (written to `out` when given).
pub fn cmd_oracle(source: &InstanceSource, out: Option<&Path>) -> Result<String> {
    let instances = load_blocks_instances(source)?;
    let mut lines = Vec::new();
    for instance in &instances {
        match min_plan_length(&instance.to_state()) {
            Ok(d) => lines.push(format!("{}: {d}", instance.id)),
            Err(e) => lines.push(format!("{}: unsolvable ({e})", instance.id)),
        }
    }
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_string_pretty(&instances)?)?;
        lines.push(format!("wrote {} instances to {}", instances.len(), out.display()));
    }
    Ok(lines.join("\n") + "\n")
}

/// Re-prints a stored tree: shape, value estimates, and the best path.
pub fn cmd_replay(tree_path: &Path) -> Result<String> {
    let dump = TreeDump::from_json(&std::fs::read_to_string(tree_path)?)?;
    let mut text = format!(
        "tree {} ({:?}), {} nodes\n",
        dump.tree_id,
        dump.method,
        dump.nodes.len()
    );
    // Greedy descent by value, mirroring best-path extraction.
    let mut id = dump.root_id;
    loop {
        let node = &dump.nodes[id];
        match &node.action {
            Some(action) => text.push_str(&format!(
                "  [{}] v={:.4} visits={} {}\n",
                node.id, node.v, node.visits, action
            )),
            None => text.push_str(&format!("  [{}] v={:.4} visits={} <root>\n", node.id, node.v, node.visits)),
        }
        let Some(&next) = node.children.iter().max_by(|&&a, &&b| {
            let (na, nb) = (&dump.nodes[a], &dump.nodes[b]);
            na.v.partial_cmp(&nb.v)
                .unwrap()
                .then(na.visits.cmp(&nb.visits))
                .then(b.cmp(&a))
        }) else {
            break;
        };
        id = next;
    }
    text.push_str(&format!("final state:\n{}\n", dump.nodes[id].state));
    Ok(text)
}
