use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use concern_core::par::Execution;
use concern_core::student::{Classifier, FitSpec, StudentModel};
use concern_core::synthetic::{Generator, KindMix, SyntheticConfig};
use concern_core::taxonomy::LabelVector;

fn bench_predict(c: &mut Criterion) {
    let mut g = Generator::vaccine(SyntheticConfig { mix: KindMix::concern_only(), ..Default::default() });
    let train = g.passages(1000);
    let texts: Vec<&str> = train.iter().map(|p| p.text.as_str()).collect();
    let labels: Vec<LabelVector> = train.iter().map(|p| p.labels.clone()).collect();
    let spec = FitSpec::multilabel(g.rules().taxonomy());
    let (model, _) = StudentModel::fit(&spec, &texts, &labels).expect("fit");

    let query = g.passages(2000);
    let query: Vec<&str> = query.iter().map(|p| p.text.as_str()).collect();
    let mut group = c.benchmark_group("predict_batch_2000");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(model.predict_batch(&query, exec)))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_predict
}
criterion_main!(benches);
