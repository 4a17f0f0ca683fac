use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chardense_core::crf::{log_z, viterbi_decode, CrfParams};
use chardense_core::Scalar;

fn instance(rng: &mut ChaCha8Rng, labels: usize, len: usize) -> (Vec<Vec<Scalar>>, chardense_core::nn::Tensor, CrfParams) {
    let crf = CrfParams::new(labels);
    let emissions: Vec<Vec<Scalar>> = (0..len)
        .map(|_| (0..labels).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let mut trans = crf.zero_transitions();
    for v in trans.values.iter_mut() {
        *v = rng.gen_range(-2.0..2.0);
    }
    (emissions, trans, crf)
}

fn bench_crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (emissions, trans, crf) = instance(&mut rng, 9, 30);

    c.bench_function("crf_log_z_9x30", |b| {
        b.iter(|| std::hint::black_box(log_z(&emissions, &trans, &crf)))
    });
    c.bench_function("crf_viterbi_9x30", |b| {
        b.iter(|| std::hint::black_box(viterbi_decode(&emissions, &trans, &crf)))
    });
}

criterion_group!(benches, bench_crf);
criterion_main!(benches);
