use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use concern_core::analytics::{keyword_clouds, rolling_average, ArticleLabel, RollingOptions, Stopwords};
use concern_core::par::Execution;
use concern_core::synthetic::{Generator, SyntheticConfig};
use concern_core::taxonomy::{LabelVector, Taxonomy};

fn articles(n: usize, k: usize) -> Vec<ArticleLabel> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    (0..n)
        .map(|i| ArticleLabel {
            doc_id: format!("a{i}"),
            date: start + chrono::Days::new((i / 20) as u64),
            labels: LabelVector::from_bools((0..k).map(|_| rng.random_bool(0.2)).collect()),
        })
        .collect()
}

fn bench_rolling(c: &mut Criterion) {
    let t = Taxonomy::default_vaccine();
    let ids: Vec<String> = t.ids().map(str::to_string).collect();
    let arts = articles(20_000, ids.len());
    let opts = RollingOptions { window: 500, emit_partial: false };
    let mut group = c.benchmark_group("rolling_average_20k");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(rolling_average(&arts, &ids, opts, exec).unwrap()))
        });
    }
    group.finish();
}

fn bench_clouds(c: &mut Criterion) {
    let mut g = Generator::vaccine(SyntheticConfig::default());
    let ps = g.passages(5000);
    let texts: Vec<&str> = ps.iter().map(|p| p.text.as_str()).collect();
    let labels: Vec<LabelVector> = ps.iter().map(|p| p.labels.clone()).collect();
    let ids: Vec<String> = g.rules().taxonomy().ids().map(str::to_string).collect();
    let stop = Stopwords::english();
    let mut group = c.benchmark_group("keyword_clouds_5k");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(keyword_clouds(&texts, &labels, &ids, &stop, 50, exec)))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_rolling, bench_clouds
}
criterion_main!(benches);
