use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use arena_kit::builtin::{tile_world_arena, OracleTileAgent};
use arena_kit::exec;
use arena_kit::runner::{perform_parallel, perform_single, TrialResult};
use arena_kit::types::{ArenaId, EpisodeConfig, Mode};
use arena_kit::value::Tree;
use arena_kit::Arena;

fn forks(n: u64) -> Vec<(Arena, OracleTileAgent, EpisodeConfig)> {
    let base = tile_world_arena().unwrap();
    (0..n)
        .map(|i| (base.fork(ArenaId(i)), OracleTileAgent::new(Tree::new()), EpisodeConfig::eid(i, Mode::Train)))
        .collect()
}

fn rollout(item: &mut (Arena, OracleTileAgent, EpisodeConfig)) -> TrialResult {
    let (arena, agent, cfg) = item;
    perform_single(arena, agent, Mode::Train, None, Some(cfg)).unwrap()
}

fn independent_rollouts(c: &mut Criterion) {
    let mut group = c.benchmark_group("independent_rollouts");
    for n in [1u64, 4, 8] {
        let mut items = forks(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| exec::map_mut_sequential(&mut items, rollout))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| exec::map_mut_parallel(&mut items, rollout))
        });
    }
    group.finish();
}

// One shared agent, batched actions; the map behind it follows the feature flag.
fn batched_rollouts(c: &mut Criterion) {
    let base = tile_world_arena().unwrap();
    let mut arenas: Vec<Arena> = (0..8).map(|i| base.fork(ArenaId(i))).collect();
    let configs: Vec<EpisodeConfig> = (0..8).map(|e| EpisodeConfig::eid(e, Mode::Train)).collect();
    let mut agent = OracleTileAgent::new(Tree::new());
    let label = if exec::is_parallel() { "perform_parallel/rayon" } else { "perform_parallel/sequential" };
    c.bench_function(label, |b| {
        b.iter(|| perform_parallel(&mut arenas, &mut agent, &configs, Mode::Train, None).unwrap())
    });
}

criterion_group!(benches, independent_rollouts, batched_rollouts);
criterion_main!(benches);
