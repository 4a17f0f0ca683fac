use criterion::{criterion_group, criterion_main, Criterion};

use chardense_core::corpus::{build_alphabet, BioMode, Dataset, TagScheme};
use chardense_core::featurizer::{collect_ngram_stats, Featurizer};
use chardense_core::synth;

fn corpus() -> Dataset {
    let c = synth::generate(42, 200, 0, 30);
    Dataset::from_raw(c.train, vec![], vec![], TagScheme::Bio, BioMode::Strict).unwrap()
}

fn bench_featurize(c: &mut Criterion) {
    let dataset = corpus();
    let stats = collect_ngram_stats(&dataset.train, 8);
    let alphabet = build_alphabet(&dataset.train);
    let words: Vec<&str> = dataset
        .train
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.surface.as_str()))
        .collect();

    c.bench_function("featurize_cold", |b| {
        b.iter_batched(
            || Featurizer::new(stats.clone(), alphabet.clone(), 2),
            |f| {
                for w in &words {
                    std::hint::black_box(f.features(w));
                }
            },
            criterion::BatchSize::SmallInput,
        )
    });

    let warm = Featurizer::new(stats.clone(), alphabet.clone(), 2);
    for w in &words {
        warm.features(w);
    }
    c.bench_function("featurize_warm", |b| {
        b.iter(|| {
            for w in &words {
                std::hint::black_box(warm.features(w));
            }
        })
    });
}

criterion_group!(benches, bench_featurize);
criterion_main!(benches);
