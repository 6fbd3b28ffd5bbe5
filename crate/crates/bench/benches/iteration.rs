use criterion::{criterion_group, criterion_main, Criterion};
use siggame_bench::IterationFixture;
use siggame_core::game::GameConfig;

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("training_iteration");
    group.sample_size(20);
    for (name, question_limit) in [("no questions", 0), ("questions", 8)] {
        let mut fx = IterationFixture::new(GameConfig {
            question_limit,
            ..GameConfig::default()
        });
        group.bench_function(name, |b| b.iter(|| fx.step()));
    }
    group.finish();
}

criterion_group!(benches, iteration);
criterion_main!(benches);
