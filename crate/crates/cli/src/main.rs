use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use arbor_cli::manifest::{BackendSpec, InstanceSource, RunManifest};
use arbor_cli::runner;
use arbor_core::reflection::SelectionMode;

#[derive(Parser)]
#[command(name = "arbor", about = "Tree search, reflection, and evaluation harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search over an instance set as described by a manifest.
    Search(SearchArgs),
    /// Summarize a guideline from a finished trace directory.
    Reflect(ReflectArgs),
    /// Merge outcome logs into an accuracy report.
    Evaluate(EvaluateArgs),
    /// Print optimal plan lengths, or generate a verified instance suite.
    Oracle(OracleArgs),
    /// Re-print a stored search tree.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SearchArgs {
    /// Manifest JSON file describing the run.
    #[arg(long)]
    manifest: PathBuf,
    /// Override the manifest's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manifest's MCTS iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the manifest's beam width.
    #[arg(long)]
    beam: Option<usize>,
    /// Override the manifest's guideline file.
    #[arg(long)]
    guideline: Option<PathBuf>,
    /// Override the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReflectArgs {
    /// Run directory containing a trees/ subdirectory.
    #[arg(long)]
    trace_dir: PathBuf,
    /// Selection mode: important, random, all, or problem_only.
    #[arg(long, default_value = "important")]
    mode: String,
    /// Importance threshold for the important mode.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Sample count for the random mode.
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reflector backend: a fixture file, or an HTTP backend config file.
    #[arg(long, conflicts_with = "backend")]
    fixture: Option<PathBuf>,
    #[arg(long)]
    backend: Option<PathBuf>,
    /// Previous guideline to refine.
    #[arg(long)]
    prev: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directories holding outcomes.jsonl files.
    dirs: Vec<PathBuf>,
    /// Method tag of the baseline run, for relative-improvement columns.
    #[arg(long, requires = "guided")]
    baseline: Option<String>,
    /// Method tag of the guided run.
    #[arg(long, requires = "baseline")]
    guided: Option<String>,
    /// Treat the directories as iterations 1..N and report the curve AUC.
    #[arg(long)]
    curve: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance file to measure.
    #[arg(long, conflicts_with = "generate")]
    instances: Option<PathBuf>,
    /// Generator spec JSON (a list of generator specs).
    #[arg(long)]
    generate: Option<PathBuf>,
    /// Write the resulting instance set here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Stored tree JSON file.
    #[arg(long)]
    tree: PathBuf,
}

fn reflect_mode(args: &ReflectArgs) -> anyhow::Result<SelectionMode> {
    Ok(match args.mode.as_str() {
        "important" => SelectionMode::Important { lambda: args.lambda },
        "random" => SelectionMode::Random {
            count: args.count,
            seed: args.seed,
        },
        "all" => SelectionMode::All,
        "problem_only" => SelectionMode::ProblemOnly,
        other => anyhow::bail!("unknown selection mode: {other}"),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Search(args) => {
            let mut manifest = RunManifest::load(&args.manifest)?;
            if let Some(seed) = args.seed {
                manifest.search.random_seed = Some(seed);
            }
            if let Some(iterations) = args.iterations {
                manifest.search.mcts_iterations = Some(iterations);
            }
            if let Some(beam) = args.beam {
                manifest.search.beam_width = Some(beam);
            }
            if let Some(guideline) = args.guideline {
                manifest.guideline = Some(guideline);
            }
            if let Some(out) = args.out {
                manifest.output_dir = out;
            }
            print!("{}", runner::cmd_search(&manifest)?);
        }
        Command::Reflect(args) => {
            let mode = reflect_mode(&args)?;
            let backend = match (&args.fixture, &args.backend) {
                (Some(path), _) => BackendSpec::Fixture { path: path.clone() },
                (None, Some(path)) => BackendSpec::Http {
                    config: serde_json::from_str(&std::fs::read_to_string(path)?)?,
                },
                (None, None) => anyhow::bail!("a reflector backend is required: --fixture or --backend"),
            };
            let (selected, path) =
                runner::cmd_reflect(&args.trace_dir, &mode, &backend, args.prev.as_deref())?;
            println!("selected states: {selected}");
            println!("stored: {}", path.display());
        }
        Command::Evaluate(args) => {
            if args.dirs.is_empty() {
                anyhow::bail!("at least one run directory is required");
            }
            let compare = args
                .baseline
                .as_deref()
                .zip(args.guided.as_deref());
            print!("{}", runner::cmd_evaluate(&args.dirs, compare, args.curve)?);
        }
        Command::Oracle(args) => {
            let source = match (&args.instances, &args.generate) {
                (Some(path), _) => InstanceSource::File { path: path.clone() },
                (None, Some(path)) => InstanceSource::Generator {
                    specs: serde_json::from_str(&std::fs::read_to_string(path)?)?,
                },
                (None, None) => anyhow::bail!("either --instances or --generate is required"),
            };
            print!("{}", runner::cmd_oracle(&source, args.out.as_deref())?);
        }
        Command::Replay(args) => {
            print!("{}", runner::cmd_replay(&args.tree)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
