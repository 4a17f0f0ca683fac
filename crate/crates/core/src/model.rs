//! The sequence tagger: char-dense feature network, word-embedding
//! concatenation, optional pre/post-RNN dense layers, residual-stacked
//! Bi-LSTM, and a softmax or CRF head. Includes checkpoint (de)serialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{SectionReader, SectionWriter};
use crate::corpus::{Alphabet, EmbeddingMatrix, LabelSet, WordVocab};
use crate::crf::{self, CrfParams};
use crate::error::{CoreError, Result};
use crate::featurizer::{Featurizer, NgramStats};
use crate::nn::dense::DenseCache;
use crate::nn::dropout::{inverted_dropout_mask, variational_mask};
use crate::nn::lstm::BiLstmCache;
use crate::nn::tensor::Tensor;
use crate::nn::{Activation, BiLstm, Dense, ParameterStore};
use crate::scalar::SCALAR_TAG;
use crate::Scalar;

pub const EMBED_PARAM: &str = "embed";
pub const CRF_PARAM: &str = "crf.trans";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Softmax,
    Crf,
}

/// Keep probabilities per dropout site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub char_dense: f64,
    pub word_feature: f64,
    pub recurrent: f64,
    pub dense: f64,
}

impl Default for DropoutSpec {
    fn default() -> Self {
        Self {
            char_dense: 0.7,
            word_feature: 0.9,
            recurrent: 0.5,
            dense: 0.5,
        }
    }
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("char_dense", self.char_dense),
            ("word_feature", self.word_feature),
            ("recurrent", self.recurrent),
            ("dense", self.dense),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CoreError::Config(format!(
                    "dropout keep probability {name}={p} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Disable all dropout (keep probability 1 at every site).
    pub fn none() -> Self {
        Self {
            char_dense: 1.0,
            word_feature: 1.0,
            recurrent: 1.0,
            dense: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub char_layer_size: usize,
    pub pieces_k: usize,
    pub word_dim: usize,
    pub rnn_size: usize,
    pub rnn_depth: usize,
    pub pre_rnn_size: Option<usize>,
    pub post_rnn_size: Option<usize>,
    pub head: Head,
    pub dropout: DropoutSpec,
    pub max_ngram: usize,
    /// Control-run switch: when false the character feature vector is
    /// zeroed everywhere and the char-dense layer receives no gradient.
    pub char_enabled: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_layer_size: 50,
            pieces_k: 2,
            word_dim: 300,
            rnn_size: 350,
            rnn_depth: 2,
            pre_rnn_size: Some(350),
            post_rnn_size: Some(350),
            head: Head::Softmax,
            dropout: DropoutSpec::default(),
            max_ngram: 8,
            char_enabled: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rnn_depth < 1 {
            return Err(CoreError::Config("rnn_depth must be at least 1".into()));
        }
        for (name, v) in [
            ("char_layer_size", self.char_layer_size),
            ("pieces_k", self.pieces_k),
            ("word_dim", self.word_dim),
            ("rnn_size", self.rnn_size),
        ] {
            if v == 0 {
                return Err(CoreError::Config(format!("{name} must be positive")));
            }
        }
        self.dropout.validate()
    }

    /// Per-step input width: word vector concatenated with the char
    /// feature vector.
    pub fn composed_dim(&self) -> usize {
        self.word_dim + self.char_layer_size
    }
}

/// Forward-pass record for one sentence; everything the backward pass
/// needs.
pub struct SentenceState {
    pub scores: Vec<Vec<Scalar>>,
    char_caches: Vec<Option<DenseCache>>,
    char_masks: Option<Vec<Vec<Scalar>>>,
    word_masks: Option<Vec<Vec<Scalar>>>,
    word_ids: Vec<usize>,
    pre_caches: Option<Vec<DenseCache>>,
    pre_masks: Option<Vec<Vec<Scalar>>>,
    rnn_caches: Vec<BiLstmCache>,
    rnn_residual: Vec<bool>,
    post_caches: Option<Vec<DenseCache>>,
    post_masks: Option<Vec<Vec<Scalar>>>,
    proj_caches: Vec<DenseCache>,
}

pub struct TaggerModel {
    pub config: ModelConfig,
    pub vocab: WordVocab,
    pub labels: LabelSet,
    pub featurizer: Featurizer,
    pub store: ParameterStore,
    char_dense: Dense,
    pre_rnn: Option<Dense>,
    rnn: Vec<BiLstm>,
    post_rnn: Option<Dense>,
    proj: Dense,
    pub crf: Option<CrfParams>,
}

fn build_layers(
    config: &ModelConfig,
    sparse_dim: usize,
    num_labels: usize,
) -> (Dense, Option<Dense>, Vec<BiLstm>, Option<Dense>, Dense, Option<CrfParams>) {
    let char_dense = Dense::new("char_dense", sparse_dim, config.char_layer_size, Activation::Relu);
    let composed = config.composed_dim();
    let pre_rnn = config
        .pre_rnn_size
        .map(|size| Dense::new("pre", composed, size, Activation::Relu));
    let mut rnn_in = config.pre_rnn_size.unwrap_or(composed);
    let mut rnn = Vec::with_capacity(config.rnn_depth);
    for d in 0..config.rnn_depth {
        rnn.push(BiLstm::new(&format!("rnn{d}"), rnn_in, config.rnn_size));
        rnn_in = config.rnn_size;
    }
    let post_rnn = config
        .post_rnn_size
        .map(|size| Dense::new("post", config.rnn_size, size, Activation::Relu));
    let proj_in = config.post_rnn_size.unwrap_or(config.rnn_size);
    let proj = Dense::new("proj", proj_in, num_labels, Activation::Identity);
    let crf = match config.head {
        Head::Crf => Some(CrfParams::new(num_labels)),
        Head::Softmax => None,
    };
    (char_dense, pre_rnn, rnn, post_rnn, proj, crf)
}

impl TaggerModel {
    /// Build and initialize a model. Embeddings come from the pretrained
    /// matrix when given, otherwise from a seeded uniform draw.
    pub fn new(
        config: ModelConfig,
        vocab: WordVocab,
        stats: NgramStats,
        alphabet: Alphabet,
        labels: LabelSet,
        embeddings: Option<EmbeddingMatrix>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let featurizer = Featurizer::new(stats, alphabet, config.pieces_k);
        let sparse_dim = featurizer.dim();
        let (char_dense, pre_rnn, rnn, post_rnn, proj, crf) =
            build_layers(&config, sparse_dim, labels.len());

        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        char_dense.init(&mut store, &mut rng);
        if let Some(pre) = &pre_rnn {
            pre.init(&mut store, &mut rng);
        }
        for layer in &rnn {
            layer.init(&mut store, &mut rng);
        }
        if let Some(post) = &post_rnn {
            post.init(&mut store, &mut rng);
        }
        proj.init(&mut store, &mut rng);

        let embed = match embeddings {
            Some(m) => {
                if m.rows != vocab.len() || m.dim != config.word_dim {
                    return Err(CoreError::Config(format!(
                        "embedding matrix {}x{} does not match vocab {} x word_dim {}",
                        m.rows,
                        m.dim,
                        vocab.len(),
                        config.word_dim
                    )));
                }
                Tensor::from_vec(&[m.rows, m.dim], m.values)
            }
            None => {
                use rand::distributions::{Distribution, Uniform};
                let bound = 0.5 / config.word_dim as f64;
                let uni = Uniform::new_inclusive(-bound, bound);
                let values = (0..vocab.len() * config.word_dim)
                    .map(|_| uni.sample(&mut rng) as Scalar)
                    .collect();
                Tensor::from_vec(&[vocab.len(), config.word_dim], values)
            }
        };
        store.define(EMBED_PARAM, embed, true);
        if let Some(c) = &crf {
            store.define(CRF_PARAM, c.zero_transitions(), true);
        }

        Ok(Self {
            config,
            vocab,
            labels,
            featurizer,
            store,
            char_dense,
            pre_rnn,
            rnn,
            post_rnn,
            proj,
            crf,
        })
    }

    /// Char feature of one word: sparse vector through the dense layer.
    /// Zero when the char channel is disabled.
    fn char_feature(&self, surface: &str) -> (Vec<Scalar>, Option<DenseCache>) {
        if !self.config.char_enabled {
            return (vec![0.0; self.config.char_layer_size], None);
        }
        let sparse = self.featurizer.features(surface);
        let (y, cache) = self.char_dense.forward(&self.store, &sparse.values);
        (y, Some(cache))
    }

    /// Encode a sentence into per-token label scores. In training mode,
    /// dropout masks are drawn from `rng` (one variational mask per
    /// Bi-LSTM direction per layer, fresh masks per token elsewhere).
    pub fn encode(
        &self,
        word_ids: &[usize],
        surfaces: &[&str],
        rng: Option<&mut ChaCha8Rng>,
    ) -> SentenceState {
        assert_eq!(word_ids.len(), surfaces.len());
        let n = surfaces.len();
        assert!(n > 0, "cannot encode an empty sentence");
        let training = rng.is_some();
        let drop = self.config.dropout;
        let mut rng = rng;

        let mut char_caches = Vec::with_capacity(n);
        let mut char_masks = training.then(Vec::new);
        let mut word_masks = training.then(Vec::new);
        let mut composed: Vec<Vec<Scalar>> = Vec::with_capacity(n);
        let embed = self.store.value(EMBED_PARAM);
        for (t, surface) in surfaces.iter().enumerate() {
            let (mut char_vec, cache) = self.char_feature(surface);
            char_caches.push(cache);
            if let Some(rng) = rng.as_deref_mut() {
                let m = inverted_dropout_mask(char_vec.len(), drop.char_dense, rng);
                for (v, mm) in char_vec.iter_mut().zip(&m) {
                    *v *= mm;
                }
                char_masks.as_mut().unwrap().push(m);
            }
            let row = &embed.values
                [word_ids[t] * self.config.word_dim..(word_ids[t] + 1) * self.config.word_dim];
            let mut word_vec = row.to_vec();
            if let Some(rng) = rng.as_deref_mut() {
                let m = inverted_dropout_mask(word_vec.len(), drop.word_feature, rng);
                for (v, mm) in word_vec.iter_mut().zip(&m) {
                    *v *= mm;
                }
                word_masks.as_mut().unwrap().push(m);
            }
            word_vec.extend(char_vec);
            composed.push(word_vec);
        }

        let mut xs = composed;
        let mut pre_caches = None;
        let mut pre_masks = None;
        if let Some(pre) = &self.pre_rnn {
            let mut caches = Vec::with_capacity(n);
            let mut masks = training.then(Vec::new);
            let mut outs = Vec::with_capacity(n);
            for x in &xs {
                let (mut y, cache) = pre.forward(&self.store, x);
                caches.push(cache);
                if let Some(rng) = rng.as_deref_mut() {
                    let m = inverted_dropout_mask(y.len(), drop.dense, rng);
                    for (v, mm) in y.iter_mut().zip(&m) {
                        *v *= mm;
                    }
                    masks.as_mut().unwrap().push(m);
                }
                outs.push(y);
            }
            xs = outs;
            pre_caches = Some(caches);
            pre_masks = masks;
        }

        let mut rnn_caches = Vec::with_capacity(self.rnn.len());
        let mut rnn_residual = Vec::with_capacity(self.rnn.len());
        for layer in &self.rnn {
            let (mask_f, mask_b) = match rng.as_deref_mut() {
                Some(rng) => (
                    Some(variational_mask(layer.fwd.hidden, drop.recurrent, rng)),
                    Some(variational_mask(layer.bwd.hidden, drop.recurrent, rng)),
                ),
                None => (None, None),
            };
            let (ys, cache) =
                layer.run(&self.store, &xs, mask_f.as_deref(), mask_b.as_deref());
            let residual = !rnn_caches.is_empty() && ys[0].len() == xs[0].len();
            let outs: Vec<Vec<Scalar>> = if residual {
                ys.iter()
                    .zip(&xs)
                    .map(|(y, x)| y.iter().zip(x).map(|(a, b)| a + b).collect())
                    .collect()
            } else {
                ys
            };
            rnn_caches.push(cache);
            rnn_residual.push(residual);
            xs = outs;
        }

        let mut post_caches = None;
        let mut post_masks = None;
        if let Some(post) = &self.post_rnn {
            let mut caches = Vec::with_capacity(n);
            let mut masks = training.then(Vec::new);
            let mut outs = Vec::with_capacity(n);
            for x in &xs {
                let (mut y, cache) = post.forward(&self.store, x);
                caches.push(cache);
                if let Some(rng) = rng.as_deref_mut() {
                    let m = inverted_dropout_mask(y.len(), drop.dense, rng);
                    for (v, mm) in y.iter_mut().zip(&m) {
                        *v *= mm;
                    }
                    masks.as_mut().unwrap().push(m);
                }
                outs.push(y);
            }
            xs = outs;
            post_caches = Some(caches);
            post_masks = masks;
        }

        let mut proj_caches = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for x in &xs {
            let (y, cache) = self.proj.forward(&self.store, x);
            proj_caches.push(cache);
            scores.push(y);
        }

        SentenceState {
            scores,
            char_caches,
            char_masks,
            word_masks,
            word_ids: word_ids.to_vec(),
            pre_caches,
            pre_masks,
            rnn_caches,
            rnn_residual,
            post_caches,
            post_masks,
            proj_caches,
        }
    }

    /// Accumulate parameter gradients for one sentence given the gradient
    /// of the loss with respect to the per-token scores.
    pub fn backward(&mut self, state: &SentenceState, d_scores: &[Vec<Scalar>]) {
        let n = d_scores.len();
        assert_eq!(n, state.proj_caches.len());
        let char_dense = &self.char_dense;
        let pre_rnn = &self.pre_rnn;
        let rnn = &self.rnn;
        let post_rnn = &self.post_rnn;
        let proj = &self.proj;
        let word_dim = self.config.word_dim;
        let char_enabled = self.config.char_enabled;
        let (values, grads) = self.store.split_mut();

        let mut dxs: Vec<Vec<Scalar>> = (0..n)
            .map(|t| proj.backward(values, grads, &state.proj_caches[t], &d_scores[t]))
            .collect();

        if let Some(post) = post_rnn {
            let caches = state.post_caches.as_ref().unwrap();
            for t in 0..n {
                if let Some(masks) = &state.post_masks {
                    for (v, m) in dxs[t].iter_mut().zip(&masks[t]) {
                        *v *= m;
                    }
                }
                dxs[t] = post.backward(values, grads, &caches[t], &dxs[t]);
            }
        }

        for (idx, layer) in rnn.iter().enumerate().rev() {
            let d_layer_out = dxs;
            let mut d_in = layer.backward(values, grads, &state.rnn_caches[idx], &d_layer_out);
            if state.rnn_residual[idx] {
                for (di, dy) in d_in.iter_mut().zip(&d_layer_out) {
                    for (a, b) in di.iter_mut().zip(dy) {
                        *a += b;
                    }
                }
            }
            dxs = d_in;
        }

        if let Some(pre) = pre_rnn {
            let caches = state.pre_caches.as_ref().unwrap();
            for t in 0..n {
                if let Some(masks) = &state.pre_masks {
                    for (v, m) in dxs[t].iter_mut().zip(&masks[t]) {
                        *v *= m;
                    }
                }
                dxs[t] = pre.backward(values, grads, &caches[t], &dxs[t]);
            }
        }

        // split composed-input gradient into word and char channels
        let embed_grad = grads.get_mut(EMBED_PARAM).unwrap();
        let mut d_chars: Vec<Vec<Scalar>> = Vec::with_capacity(n);
        for t in 0..n {
            let (d_word, d_char) = dxs[t].split_at(word_dim);
            let mut d_word = d_word.to_vec();
            if let Some(masks) = &state.word_masks {
                for (v, m) in d_word.iter_mut().zip(&masks[t]) {
                    *v *= m;
                }
            }
            let row_start = state.word_ids[t] * word_dim;
            for (j, v) in d_word.iter().enumerate() {
                embed_grad.values[row_start + j] += v;
            }
            let mut d_char = d_char.to_vec();
            if let Some(masks) = &state.char_masks {
                for (v, m) in d_char.iter_mut().zip(&masks[t]) {
                    *v *= m;
                }
            }
            d_chars.push(d_char);
        }
        if char_enabled {
            for t in 0..n {
                if let Some(cache) = &state.char_caches[t] {
                    char_dense.backward(values, grads, cache, &d_chars[t]);
                }
            }
        }
    }

    /// Add a scaled CRF transition gradient into the parameter store.
    pub fn accumulate_crf_grad(&mut self, d_trans: &Tensor, scale: Scalar) {
        let (_, grads) = self.store.split_mut();
        let g = grads.get_mut(CRF_PARAM).expect("model has no CRF head");
        for (a, b) in g.values.iter_mut().zip(&d_trans.values) {
            *a += scale * b;
        }
    }

    /// Decode the best tag sequence for already-computed scores.
    pub fn decode(&self, scores: &[Vec<Scalar>]) -> Vec<usize> {
        match &self.crf {
            Some(crf) => {
                let transitions = self.store.value(CRF_PARAM);
                crf::viterbi_decode(scores, transitions, crf).0
            }
            None => scores
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .fold((0, Scalar::NEG_INFINITY), |(bi, bv), (i, &v)| {
                            if v > bv {
                                (i, v)
                            } else {
                                (bi, bv)
                            }
                        })
                        .0
                })
                .collect(),
        }
    }

    /// Dense character feature of one word: the char-dense layer's output
    /// in inference mode (all zeros when the channel is disabled).
    pub fn char_dense_feature(&self, surface: &str) -> Vec<Scalar> {
        self.char_feature(surface).0
    }

    /// Tag one sentence in inference mode (no dropout, vocab lookup with
    /// OOV fallback).
    pub fn tag(&self, surfaces: &[&str]) -> Vec<usize> {
        let word_ids: Vec<usize> = surfaces.iter().map(|s| self.vocab.lookup(s)).collect();
        let state = self.encode(&word_ids, surfaces, None);
        self.decode(&state.scores)
    }

    // ---- checkpointing ----

    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct TensorMeta<'a> {
            name: &'a str,
            shape: &'a [usize],
            trainable: bool,
        }
        let mut w = SectionWriter::new();
        w.add("config", serde_json::to_vec(&self.config).unwrap());
        w.add("labels", serde_json::to_vec(self.labels.names()).unwrap());
        w.add("vocab", serde_json::to_vec(&self.vocab).unwrap());
        w.add(
            "alphabet",
            serde_json::to_vec(&self.featurizer.alphabet).unwrap(),
        );
        w.add("ngrams", self.featurizer.stats.to_text().into_bytes());

        let names = self.store.names();
        let metas: Vec<TensorMeta> = names
            .iter()
            .map(|n| TensorMeta {
                name: n,
                shape: &self.store.value(n).shape,
                trainable: self.store.is_trainable(n),
            })
            .collect();
        let mut manifest = serde_json::to_vec(&metas).unwrap();
        manifest.push(b'\n');
        manifest.push(SCALAR_TAG);
        w.add("manifest", manifest);

        let mut blob = Vec::new();
        for n in &names {
            for v in &self.store.value(n).values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.add("tensors", blob);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct TensorMeta {
            name: String,
            shape: Vec<usize>,
            trainable: bool,
        }
        let r = SectionReader::parse(bytes)?;
        let config: ModelConfig = serde_json::from_slice(r.get("config")?)
            .map_err(|e| CoreError::CkptMalformed(format!("config: {e}")))?;
        let label_names: Vec<String> = serde_json::from_slice(r.get("labels")?)
            .map_err(|e| CoreError::CkptMalformed(format!("labels: {e}")))?;
        let labels = LabelSet::from_names(label_names);
        let mut vocab: WordVocab = serde_json::from_slice(r.get("vocab")?)
            .map_err(|e| CoreError::CkptMalformed(format!("vocab: {e}")))?;
        vocab.rebuild_index();
        let mut alphabet: Alphabet = serde_json::from_slice(r.get("alphabet")?)
            .map_err(|e| CoreError::CkptMalformed(format!("alphabet: {e}")))?;
        alphabet.rebuild_index();
        let stats = NgramStats::from_text(r.get("ngrams")?)?;

        let manifest_raw = r.get("manifest")?;
        if manifest_raw.len() < 2 {
            return Err(CoreError::CkptMalformed("manifest too short".into()));
        }
        let (json, tail) = manifest_raw.split_at(manifest_raw.len() - 2);
        if tail[1] != SCALAR_TAG {
            return Err(CoreError::CkptMalformed(format!(
                "checkpoint dtype f{} does not match this build's f{}",
                tail[1], SCALAR_TAG
            )));
        }
        let metas: Vec<TensorMeta> = serde_json::from_slice(json)
            .map_err(|e| CoreError::CkptMalformed(format!("manifest: {e}")))?;

        let blob = r.get("tensors")?;
        let width = std::mem::size_of::<Scalar>();
        let mut store = ParameterStore::new();
        let mut offset = 0usize;
        for meta in &metas {
            let count: usize = meta.shape.iter().product();
            let need = count * width;
            if offset + need > blob.len() {
                return Err(CoreError::CkptTruncated {
                    section: format!("tensors:{}", meta.name),
                });
            }
            let mut values = Vec::with_capacity(count);
            for j in 0..count {
                let at = offset + j * width;
                let chunk: [u8; std::mem::size_of::<Scalar>()] =
                    blob[at..at + width].try_into().unwrap();
                values.push(Scalar::from_le_bytes(chunk));
            }
            offset += need;
            store.define(&meta.name, Tensor::from_vec(&meta.shape, values), meta.trainable);
        }
        if offset != blob.len() {
            return Err(CoreError::CkptMalformed(
                "trailing bytes in tensors section".into(),
            ));
        }

        let featurizer = Featurizer::new(stats, alphabet, config.pieces_k);
        let (char_dense, pre_rnn, rnn, post_rnn, proj, crf) =
            build_layers(&config, featurizer.dim(), labels.len());
        Ok(Self {
            config,
            vocab,
            labels,
            featurizer,
            store,
            char_dense,
            pre_rnn,
            rnn,
            post_rnn,
            proj,
            crf,
        })
    }
}

/// Mean per-token cross entropy of independent softmax predictions.
pub fn softmax_nll(scores: &[Vec<Scalar>], gold: &[usize]) -> Scalar {
    let (sum, _) = softmax_nll_sum_grads(scores, gold);
    sum / gold.len() as Scalar
}

/// Sum of per-token cross entropies plus the gradient of that sum with
/// respect to the scores (softmax minus one-hot).
pub fn softmax_nll_sum_grads(
    scores: &[Vec<Scalar>],
    gold: &[usize],
) -> (Scalar, Vec<Vec<Scalar>>) {
    assert_eq!(scores.len(), gold.len());
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(scores.len());
    for (row, &y) in scores.iter().zip(gold) {
        let max = row.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
        let exps: Vec<Scalar> = row.iter().map(|v| (v - max).exp()).collect();
        let z: Scalar = exps.iter().sum();
        let log_z = max + z.ln();
        loss += log_z - row[y];
        let mut g: Vec<Scalar> = exps.iter().map(|e| e / z).collect();
        g[y] -= 1.0;
        grads.push(g);
    }
    (loss, grads)
}
