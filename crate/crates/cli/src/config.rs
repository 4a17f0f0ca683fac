//! Flat key-value config files ("key = value" lines, '#' comments) and
//! the merged settings object. CLI flags always override file values.

use std::path::Path;

use chardense_core::model::{DropoutSpec, Head, ModelConfig};
use chardense_core::train::{DevMetric, TrainConfig};

#[derive(Debug, Clone)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub threads: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            threads: 1,
        }
    }
}

/// Parse a config file into ordered (key, value) pairs.
pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            format!(
                "{}:{}: expected 'key = value', got '{line}'",
                path.display(),
                lineno + 1
            )
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("bad value '{value}' for {key}"))
}

fn parse_opt_size(key: &str, value: &str) -> Result<Option<usize>, String> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse::<usize>(key, value).map(Some)
    }
}

pub fn parse_head(value: &str) -> Result<Head, String> {
    match value {
        "softmax" => Ok(Head::Softmax),
        "crf" => Ok(Head::Crf),
        other => Err(format!("head must be 'softmax' or 'crf', got '{other}'")),
    }
}

impl Settings {
    /// Apply one key-value pair; unknown keys are an error.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "seed" => self.train.seed = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "initial_batch" => self.train.initial_batch = parse(key, value)?,
            "freeze_frac" => self.train.t_freeze = parse(key, value)?,
            "oov_swap_p" => self.train.oov_swap_p = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "lowercase" => self.train.lowercase = parse(key, value)?,
            "min_count" => self.train.min_count = parse(key, value)?,
            "dev_metric" => {
                self.train.dev_metric = match value {
                    "token_accuracy" => DevMetric::TokenAccuracy,
                    "chunk_f1" => DevMetric::ChunkF1,
                    other => {
                        return Err(format!(
                            "dev_metric must be 'token_accuracy' or 'chunk_f1', got '{other}'"
                        ))
                    }
                }
            }
            "head" => self.model.head = parse_head(value)?,
            "pieces_k" => self.model.pieces_k = parse(key, value)?,
            "char_layer_size" => self.model.char_layer_size = parse(key, value)?,
            "word_dim" => self.model.word_dim = parse(key, value)?,
            "rnn_size" => self.model.rnn_size = parse(key, value)?,
            "rnn_depth" => self.model.rnn_depth = parse(key, value)?,
            "pre_rnn_size" => self.model.pre_rnn_size = parse_opt_size(key, value)?,
            "post_rnn_size" => self.model.post_rnn_size = parse_opt_size(key, value)?,
            "max_ngram" => self.model.max_ngram = parse(key, value)?,
            "char_enabled" => self.model.char_enabled = parse(key, value)?,
            "dropout" => {
                self.model.dropout = if parse::<bool>(key, value)? {
                    DropoutSpec::default()
                } else {
                    DropoutSpec::none()
                }
            }
            "keep_char" => self.model.dropout.char_dense = parse(key, value)?,
            "keep_word" => self.model.dropout.word_feature = parse(key, value)?,
            "keep_recurrent" => self.model.dropout.recurrent = parse(key, value)?,
            "keep_dense" => self.model.dropout.dense = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(format!("unknown config key '{other}'")),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        for (key, value) in parse_file(path)? {
            self.apply(&key, &value)?;
        }
        Ok(())
    }
}
