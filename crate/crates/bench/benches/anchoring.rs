use anchoring::assignment::{solve, MatchingTable};
use anchoring::matcher::{match_neural, LayerWidths, MatcherModel};
use anchoring::pair_features::compare;
use anchoring::sim::{generate, SimConfig};
use anchoring::{Engine, EngineConfig, Matcher};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(n: usize, m: usize, seed: u64) -> MatchingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
    MatchingTable::from_rows(&rows).unwrap()
}

fn bench_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for n in [8, 32, 128] {
        let t = random_table(n, n, n as u64);
        g.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| b.iter(|| solve(black_box(t))));
    }
    g.finish();
}

fn bench_match_neural(c: &mut Criterion) {
    let scene = generate(&SimConfig::default(), "bench").unwrap();
    let frame = &scene.frames[1].percepts;
    let anchor = anchoring::percepts::anchor_from_percept(&scene.frames[0].percepts[0], "o", anchoring::AnchorId(0));
    let pair = compare(&frame[0], &anchor).unwrap();
    let model = MatcherModel::init(LayerWidths::with_dim(scene.embedding_dim), 1).unwrap();
    c.bench_function("match_neural", |b| b.iter(|| match_neural(&model, black_box(&pair)).unwrap()));
}

fn bench_process_frame(c: &mut Criterion) {
    let scene = generate(&SimConfig { num_instances: 20, num_frames: 2, ..SimConfig::default() }, "bench").unwrap();
    let model = MatcherModel::init(LayerWidths::with_dim(scene.embedding_dim), 1).unwrap();
    let mut g = c.benchmark_group("process_frame");
    let configs = [
        ("analytic", EngineConfig::default()),
        ("neural", EngineConfig { matcher: Matcher::Neural(Box::new(model)), ..EngineConfig::default() }),
    ];
    for (name, cfg) in configs {
        g.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let mut e = Engine::new(cfg.clone()).unwrap();
                    e.process_frame(&scene.frames[0]).unwrap();
                    e
                },
                |mut e| e.process_frame(black_box(&scene.frames[1])).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, bench_solve, bench_match_neural, bench_process_frame);
criterion_main!(benches);
