//! Training regimen: embedding freeze phase, OOV word swapping, dynamic
//! batch-size doubling, the epoch loop with best-dev model selection, and
//! the multi-seed experiment protocol.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_alphabet, build_vocab, Dataset, EmbeddingMatrix, Sentence};
use crate::crf;
use crate::error::{CoreError, Result};
use crate::featurizer::collect_ngram_stats;
use crate::metrics::{chunk_f1, token_accuracy};
use crate::model::{softmax_nll_sum_grads, ModelConfig, TaggerModel, EMBED_PARAM};
use crate::nn::AdamState;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DevMetric {
    TokenAccuracy,
    ChunkF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_batch: usize,
    pub epochs: usize,
    pub t_freeze: f64,
    pub oov_swap_p: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub dev_metric: DevMetric,
    pub lowercase: bool,
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_batch: 8,
            epochs: 100,
            t_freeze: 0.20,
            oov_swap_p: 0.01,
            seed: 0,
            learning_rate: 0.001,
            dev_metric: DevMetric::TokenAccuracy,
            lowercase: true,
            min_count: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t_freeze) {
            return Err(CoreError::Config("t_freeze must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.oov_swap_p) {
            return Err(CoreError::Config("oov_swap_p must be in [0, 1]".into()));
        }
        if self.initial_batch < 1 {
            return Err(CoreError::Config("initial_batch must be ≥ 1".into()));
        }
        if self.epochs < 1 {
            return Err(CoreError::Config("epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Batch size doubles on each quarter of the training course:
/// initial · 2^⌊4·epoch/total⌋.
pub fn batch_size_at(epoch: usize, total_epochs: usize, initial: usize) -> usize {
    assert!(epoch < total_epochs, "epoch out of range");
    let quarter = 4 * epoch / total_epochs;
    initial << quarter
}

/// Embeddings stay frozen for the first ⌈t_freeze · total_steps⌉ optimizer
/// steps.
pub fn embeddings_frozen_at(step: usize, total_steps: usize, t_freeze: f64) -> bool {
    assert!(total_steps > 0);
    let boundary = (t_freeze * total_steps as f64).ceil() as usize;
    step < boundary
}

/// Replace each non-OOV word id with the OOV id independently with
/// probability p. Applies to the embedding channel only; character
/// features keep seeing the surface form.
pub fn oov_swap<R: Rng>(ids: &[usize], oov_index: usize, p: f64, rng: &mut R) -> Vec<usize> {
    ids.iter()
        .map(|&id| {
            if id != oov_index && rng.gen::<f64>() < p {
                oov_index
            } else {
                id
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_metric: f64,
    pub batch_size: usize,
    pub sent_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<EpochLog>,
}

impl TrainLog {
    /// Line-oriented text: epoch, loss, dev metric, batch size and
    /// sentence throughput, tab-separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.4}\t{}\t{:.2}\n",
                e.epoch, e.loss, e.dev_metric, e.batch_size, e.sent_per_sec
            ));
        }
        out
    }

    /// Equality on everything except wall-clock throughput, which two
    /// otherwise identical runs cannot reproduce.
    pub fn deterministic_eq(&self, other: &TrainLog) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss == b.loss
                    && a.dev_metric == b.dev_metric
                    && a.batch_size == b.batch_size
            })
    }
}

pub struct TrainOutcome {
    /// Serialized checkpoint of the best-dev-metric model.
    pub checkpoint: Vec<u8>,
    pub log: TrainLog,
    pub best_dev: f64,
    pub best_epoch: usize,
    /// Dev metric of the final-epoch model, for the selection contract.
    pub final_dev: f64,
}

/// Deterministic per-sentence RNG stream: mixes the run seed with the
/// epoch and the sentence's dataset index, so parallel execution orders
/// cannot change results.
fn sentence_rng(seed: u64, epoch: usize, sentence_idx: usize) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [epoch as u64, sentence_idx as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(27).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn predicted_names(model: &TaggerModel, sentences: &[Sentence]) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| {
            let surfaces: Vec<&str> = s.tokens.iter().map(|t| t.surface.as_str()).collect();
            model
                .tag(&surfaces)
                .into_iter()
                .map(|id| model.labels.name(id).to_string())
                .collect()
        })
        .collect()
}

fn gold_names(dataset: &Dataset, sentences: &[Sentence]) -> Vec<Vec<String>> {
    sentences.iter().map(|s| dataset.tag_names(s)).collect()
}

/// Evaluate a model on a split with the configured metric.
pub fn evaluate(
    model: &TaggerModel,
    dataset: &Dataset,
    sentences: &[Sentence],
    metric: DevMetric,
) -> Result<f64> {
    let gold = gold_names(dataset, sentences);
    let pred = predicted_names(model, sentences);
    match metric {
        DevMetric::TokenAccuracy => token_accuracy(&gold, &pred),
        DevMetric::ChunkF1 => Ok(chunk_f1(&gold, &pred)?.f1),
    }
}

/// Run the full training regimen and return the best-dev checkpoint with
/// the per-epoch log.
pub fn train(
    dataset: &Dataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    model_config.validate()?;
    if dataset.train.is_empty() {
        return Err(CoreError::Config("training split is empty".into()));
    }

    let vocab = build_vocab(&dataset.train, train_config.min_count, train_config.lowercase);
    let stats = collect_ngram_stats(&dataset.train, model_config.max_ngram);
    let alphabet = build_alphabet(&dataset.train);
    let mut model = TaggerModel::new(
        model_config.clone(),
        vocab,
        stats,
        alphabet,
        dataset.labels.clone(),
        embeddings.cloned(),
        train_config.seed,
    )?;

    let n = dataset.train.len();
    let total_steps: usize = (0..train_config.epochs)
        .map(|e| {
            let b = batch_size_at(e, train_config.epochs, train_config.initial_batch);
            n.div_ceil(b)
        })
        .sum();

    // dev split for selection; fall back to train when absent
    let dev: &[Sentence] = if dataset.dev.is_empty() {
        &dataset.train
    } else {
        &dataset.dev
    };

    let mut adam = AdamState::new(train_config.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0xA5A5));
    let mut step = 0usize;
    let mut log = TrainLog::default();
    let mut best_dev = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_ckpt: Option<Vec<u8>> = None;
    let mut final_dev = 0.0;
    let is_crf = model.crf.is_some();

    for epoch in 0..train_config.epochs {
        let batch_size = batch_size_at(epoch, train_config.epochs, train_config.initial_batch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);

        let epoch_start = Instant::now();
        let mut epoch_loss = 0.0f64;
        let mut epoch_denom = 0usize;

        for (batch_no, batch) in order.chunks(batch_size).enumerate() {
            let frozen = embeddings_frozen_at(step, total_steps, train_config.t_freeze);
            model.store.set_trainable(EMBED_PARAM, !frozen);
            model.store.zero_grads();

            let batch_tokens: usize = batch.iter().map(|&i| dataset.train[i].len()).sum();
            let scale: Scalar = if is_crf {
                1.0 / batch.len() as Scalar
            } else {
                1.0 / batch_tokens as Scalar
            };
            let mut batch_loss = 0.0;

            for &idx in batch {
                let sent = &dataset.train[idx];
                let surfaces: Vec<&str> =
                    sent.tokens.iter().map(|t| t.surface.as_str()).collect();
                let gold: Vec<usize> = sent.tokens.iter().map(|t| t.tag_id).collect();
                let mut rng = sentence_rng(train_config.seed, epoch, idx);
                let ids: Vec<usize> = surfaces.iter().map(|s| model.vocab.lookup(s)).collect();
                let ids = oov_swap(&ids, model.vocab.oov_index, train_config.oov_swap_p, &mut rng);

                let state = model.encode(&ids, &surfaces, Some(&mut rng));
                let (loss, mut d_scores) = if is_crf {
                    let crf_params = model.crf.as_ref().unwrap();
                    let transitions = model.store.value(crate::model::CRF_PARAM).clone();
                    let (ll, d_em, d_trans) = crf::log_likelihood_with_grads(
                        &state.scores,
                        &transitions,
                        crf_params,
                        &gold,
                    );
                    model.accumulate_crf_grad(&d_trans, scale);
                    (-ll, d_em)
                } else {
                    softmax_nll_sum_grads(&state.scores, &gold)
                };
                for row in d_scores.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                batch_loss += loss as f64;
                model.backward(&state, &d_scores);
            }

            if !batch_loss.is_finite() {
                return Err(CoreError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    diagnostics: format!(
                        "grad_norm={:.3e} embed_norm={:.3e}",
                        model.store.total_grad_norm(),
                        model.store.value(EMBED_PARAM).norm()
                    ),
                });
            }
            adam.step(&mut model.store);
            step += 1;
            epoch_loss += batch_loss;
            epoch_denom += if is_crf { batch.len() } else { batch_tokens };
        }

        let elapsed = epoch_start.elapsed().as_secs_f64();
        let dev_metric = evaluate(&model, dataset, dev, train_config.dev_metric)?;
        final_dev = dev_metric;
        if dev_metric > best_dev {
            best_dev = dev_metric;
            best_epoch = epoch;
            best_ckpt = Some(model.to_bytes());
        }
        log.entries.push(EpochLog {
            epoch,
            loss: epoch_loss / epoch_denom.max(1) as f64,
            dev_metric,
            batch_size,
            sent_per_sec: n as f64 / elapsed.max(1e-9),
        });
    }

    Ok(TrainOutcome {
        checkpoint: best_ckpt.expect("at least one epoch ran"),
        log,
        best_dev,
        best_epoch,
        final_dev,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub per_seed: Vec<(u64, f64)>,
    pub failed_seeds: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation (divide by n).
    pub sd: f64,
}

impl ExperimentReport {
    pub fn from_metrics(per_seed: Vec<(u64, f64)>, failed_seeds: Vec<u64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|(_, m)| m).sum::<f64>() / n;
        let var = per_seed.iter().map(|(_, m)| (m - mean).powi(2)).sum::<f64>() / n;
        Self {
            per_seed,
            failed_seeds,
            mean,
            sd: var.sqrt(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (seed, m) in &self.per_seed {
            out.push_str(&format!("seed {seed}\t{m:.4}\n"));
        }
        for seed in &self.failed_seeds {
            out.push_str(&format!("seed {seed}\tFAILED (excluded)\n"));
        }
        out.push_str(&format!("mean {:.2} (SD {:.2})\n", self.mean, self.sd));
        out
    }
}

/// Train with seeds seed..seed+n_seeds-1 and report the test metric of
/// each run's best checkpoint, with mean and population SD.
pub fn multi_seed(
    n_seeds: usize,
    dataset: &Dataset,
    model_config: &ModelConfig,
    base: &TrainConfig,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<ExperimentReport> {
    if n_seeds < 2 {
        return Err(CoreError::Config("multi-seed protocol needs ≥ 2 seeds".into()));
    }
    let test: &[Sentence] = if dataset.test.is_empty() {
        if dataset.dev.is_empty() {
            &dataset.train
        } else {
            &dataset.dev
        }
    } else {
        &dataset.test
    };
    let mut per_seed = Vec::new();
    let mut failed = Vec::new();
    for offset in 0..n_seeds {
        let seed = base.seed + offset as u64;
        let cfg = TrainConfig {
            seed,
            ..base.clone()
        };
        match train(dataset, model_config, &cfg, embeddings) {
            Ok(outcome) => {
                let model = TaggerModel::from_bytes(&outcome.checkpoint)?;
                let metric = evaluate(&model, dataset, test, cfg.dev_metric)?;
                per_seed.push((seed, metric));
            }
            Err(e) => {
                eprintln!("warning: seed {seed} failed and is excluded from stats: {e}");
                failed.push(seed);
            }
        }
    }
    if per_seed.is_empty() {
        return Err(CoreError::Config("every seed failed".into()));
    }
    Ok(ExperimentReport::from_metrics(per_seed, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_schedule_table4() {
        for (epoch, expect) in [(0, 8), (24, 8), (25, 16), (50, 32), (75, 64), (99, 64)] {
            assert_eq!(batch_size_at(epoch, 100, 8), expect, "epoch {epoch}");
        }
    }

    #[test]
    fn batch_schedule_minimal() {
        let sizes: Vec<usize> = (0..4).map(|e| batch_size_at(e, 4, 1)).collect();
        assert_eq!(sizes, vec![1, 2, 4, 8]);
    }

    #[test]
    fn batch_schedule_non_decreasing_and_power_of_two() {
        for total in [3usize, 7, 10, 100, 101] {
            let mut prev = 0;
            for e in 0..total {
                let b = batch_size_at(e, total, 16);
                assert!(b >= prev);
                assert!([16, 32, 64, 128].contains(&b));
                prev = b;
            }
        }
    }

    #[test]
    fn freeze_boundary() {
        assert!(embeddings_frozen_at(199, 1000, 0.2));
        assert!(!embeddings_frozen_at(200, 1000, 0.2));
        assert!(!embeddings_frozen_at(0, 100, 0.0));
        assert!(embeddings_frozen_at(99, 100, 1.0));
    }

    #[test]
    fn oov_swap_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids = vec![0usize, 1, 2, 3];
        assert_eq!(oov_swap(&ids, 9, 0.0, &mut rng), ids);
        assert_eq!(oov_swap(&ids, 9, 1.0, &mut rng), vec![9; 4]);
    }

    #[test]
    fn oov_swap_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ids = vec![0usize; 100_000];
        let swapped = oov_swap(&ids, 9, 0.01, &mut rng);
        let rate = swapped.iter().filter(|&&x| x == 9).count() as f64 / ids.len() as f64;
        assert!(
            (rate - 0.01).abs() / 0.01 < 0.10,
            "swap rate {rate} more than 10% off 0.01"
        );
    }

    #[test]
    fn experiment_report_stats() {
        let r = ExperimentReport::from_metrics(vec![(0, 5.0), (1, 5.0)], vec![]);
        assert_eq!(r.mean, 5.0);
        assert_eq!(r.sd, 0.0);
        let r = ExperimentReport::from_metrics(vec![(0, 1.0), (1, 3.0)], vec![]);
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.sd, 1.0);
    }

    #[test]
    fn multi_seed_requires_two() {
        let dataset = crate::corpus::Dataset::from_raw(
            vec![vec![("a".into(), "O".into())]],
            vec![],
            vec![],
            crate::corpus::TagScheme::None,
            crate::corpus::BioMode::Strict,
        )
        .unwrap();
        let err = multi_seed(1, &dataset, &ModelConfig::default(), &TrainConfig::default(), None);
        assert!(err.is_err());
    }

    #[test]
    fn train_log_text_format() {
        let log = TrainLog {
            entries: vec![EpochLog {
                epoch: 0,
                loss: 1.5,
                dev_metric: 88.25,
                batch_size: 8,
                sent_per_sec: 123.456,
            }],
        };
        assert_eq!(log.to_text(), "0\t1.500000\t88.2500\t8\t123.46\n");
    }
}
