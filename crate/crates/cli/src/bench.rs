//! Throughput benchmark: featurize-only sentences/sec with a cold then
//! warm cache, and full training-step throughput (median over timed
//! epochs after one warmup).

use std::time::Instant;

use chardense_core::corpus::{build_alphabet, build_vocab, Dataset};
use chardense_core::featurizer::{collect_ngram_stats, Featurizer};
use chardense_core::model::{softmax_nll_sum_grads, Head, TaggerModel, CRF_PARAM};
use chardense_core::nn::AdamState;
use chardense_core::{crf, Result};

use crate::config::Settings;

pub struct BenchReport {
    pub featurize_cold_sps: f64,
    pub featurize_warm_sps: f64,
    pub train_step_sps: f64,
    pub hardware: String,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        format!(
            "featurize cold\t{:.2} sent/s\nfeaturize warm\t{:.2} sent/s\ntrain step\t{:.2} sent/s\nhardware\t{}\n",
            self.featurize_cold_sps, self.featurize_warm_sps, self.train_step_sps, self.hardware
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Time one pass of per-word featurization over the corpus.
fn featurize_pass(featurizer: &Featurizer, dataset: &Dataset) -> f64 {
    let start = Instant::now();
    for sent in &dataset.train {
        for tok in &sent.tokens {
            let _ = featurizer.features(&tok.surface);
        }
    }
    dataset.train.len() as f64 / start.elapsed().as_secs_f64().max(1e-9)
}

pub fn run(dataset: &Dataset, settings: &Settings, timed_epochs: usize) -> Result<BenchReport> {
    let stats = collect_ngram_stats(&dataset.train, settings.model.max_ngram);
    let alphabet = build_alphabet(&dataset.train);

    // featurize-only timing runs on a single worker by construction
    let featurizer = Featurizer::new(stats.clone(), alphabet.clone(), settings.model.pieces_k);
    let cold = featurize_pass(&featurizer, dataset);
    let warm = featurize_pass(&featurizer, dataset);

    let vocab = build_vocab(
        &dataset.train,
        settings.train.min_count,
        settings.train.lowercase,
    );
    let mut model = TaggerModel::new(
        settings.model.clone(),
        vocab,
        stats,
        alphabet,
        dataset.labels.clone(),
        None,
        settings.train.seed,
    )?;
    let mut adam = AdamState::new(settings.train.learning_rate);
    let is_crf = settings.model.head == Head::Crf;

    let mut epoch_sps = Vec::new();
    for epoch in 0..timed_epochs + 1 {
        let start = Instant::now();
        for sent in &dataset.train {
            let surfaces: Vec<&str> = sent.tokens.iter().map(|t| t.surface.as_str()).collect();
            let gold: Vec<usize> = sent.tokens.iter().map(|t| t.tag_id).collect();
            let ids: Vec<usize> = surfaces.iter().map(|s| model.vocab.lookup(s)).collect();
            model.store.zero_grads();
            let state = model.encode(&ids, &surfaces, None);
            let d_scores = if is_crf {
                let crf_params = model.crf.unwrap();
                let trans = model.store.value(CRF_PARAM).clone();
                let (_, d_em, d_trans) =
                    crf::log_likelihood_with_grads(&state.scores, &trans, &crf_params, &gold);
                model.accumulate_crf_grad(&d_trans, 1.0);
                d_em
            } else {
                softmax_nll_sum_grads(&state.scores, &gold).1
            };
            model.backward(&state, &d_scores);
            adam.step(&mut model.store);
        }
        let sps = dataset.train.len() as f64 / start.elapsed().as_secs_f64().max(1e-9);
        if epoch > 0 {
            // first epoch is warmup
            epoch_sps.push(sps);
        }
    }

    Ok(BenchReport {
        featurize_cold_sps: cold,
        featurize_warm_sps: warm,
        train_step_sps: median(epoch_sps),
        hardware: format!("{} {}", std::env::consts::OS, std::env::consts::ARCH),
    })
}
