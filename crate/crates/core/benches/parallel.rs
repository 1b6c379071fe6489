use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use serde_json::json;
use souschef_core::analytics::stats::fleiss_kappa_with;
use souschef_core::corpus::{parse_corpus, Recipe};
use souschef_core::gateway::{revise_batch, Backoff, IdentityMock, RequestDefaults};
use souschef_core::par::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn corpus_text(n: usize) -> String {
    (0..n)
        .map(|i| {
            let steps: Vec<_> = (0..4 + i % 12)
                .map(|s| json!({"text": format!("Stir the pot for {s} minutes and season to taste.")}))
                .collect();
            json!({
                "id": format!("bench-{i}"),
                "title": format!("Dish {i}"),
                "class": "paella",
                "ingredients": [{"text": "1 cup rice"}, {"text": "2 cups stock"}, {"text": "1 onion"}],
                "instructions": steps,
            })
            .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn bench_parse(c: &mut Criterion) {
    let text = corpus_text(20_000);
    let mut group = c.benchmark_group("parse_corpus");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| parse_corpus(black_box(&text), exec).unwrap())
        });
    }
    group.finish();
}

fn bench_kappa(c: &mut Criterion) {
    let raters = 5;
    let ratings: Vec<Vec<usize>> = (0..200_000)
        .map(|i| {
            let first = i % (raters + 1);
            vec![first, raters - first]
        })
        .collect();
    let mut group = c.benchmark_group("fleiss_kappa");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fleiss_kappa_with(black_box(&ratings), raters, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_revise(c: &mut Criterion) {
    let recipes: Vec<Recipe> = parse_corpus(&corpus_text(2_000), Exec::Sequential)
        .unwrap()
        .collection
        .into_vec();
    let defaults = RequestDefaults {
        backoff: Backoff::none(),
        ..RequestDefaults::default()
    };
    let mut group = c.benchmark_group("revise_batch");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| revise_batch(black_box(&recipes), &IdentityMock, &defaults, 8, exec, None))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_parse, bench_kappa, bench_revise);
criterion_main!(benches);
