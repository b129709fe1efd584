use criterion::{criterion_group, criterion_main, Criterion};

use arbor_core::env::blocks::{self, BlocksEnv};
use arbor_core::env::oracle::{generate_instances, GeneratorSpec};
use arbor_core::policy::OraclePolicy;
use arbor_core::reflection::select_important_states;
use arbor_core::{beam_bfs, mcts_search, SearchConfig};

fn fixture_env() -> BlocksEnv {
    let spec = GeneratorSpec {
        blocks: 4,
        target_steps: 4,
        count: 1,
        seed: 11,
        max_stacks: None,
    };
    let instance = generate_instances(&spec).unwrap().remove(0);
    BlocksEnv::from_instance(&instance)
}

fn bench_mcts(c: &mut Criterion) {
    let env = fixture_env();
    let policy = OraclePolicy::new();
    let config = SearchConfig {
        mcts_iterations: 20,
        exploration_constant: 0.0,
        depth_limit: 8,
        ..SearchConfig::default()
    };
    c.bench_function("mcts_20_iterations_4_blocks", |b| {
        b.iter(|| mcts_search(&env, &policy, &config).unwrap())
    });
}

fn bench_beam_bfs(c: &mut Criterion) {
    let env = fixture_env();
    let policy = OraclePolicy::new();
    let config = SearchConfig {
        beam_width: 5,
        depth_limit: 6,
        ..SearchConfig::default()
    };
    c.bench_function("beam_bfs_b5_4_blocks", |b| {
        b.iter(|| beam_bfs(&env, &policy, &config).unwrap())
    });
}

fn bench_selection(c: &mut Criterion) {
    let env = fixture_env();
    let policy = OraclePolicy::new();
    let config = SearchConfig {
        mcts_iterations: 20,
        exploration_constant: 0.0,
        depth_limit: 8,
        ..SearchConfig::default()
    };
    let out = mcts_search(&env, &policy, &config).unwrap();
    let dump = out.tree.dump(
        "bench",
        |s| blocks::render_statement(s),
        |a| blocks::render_action(a),
    );
    c.bench_function("important_state_selection", |b| {
        b.iter(|| select_important_states(&dump, 0.1))
    });
}

criterion_group!(benches, bench_mcts, bench_beam_bfs, bench_selection);
criterion_main!(benches);
