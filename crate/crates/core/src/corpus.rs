//! CoNLL-format corpus reading, vocabularies, alphabets and pretrained
//! word embeddings.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::Scalar;

pub const OOV_TOKEN: &str = "<oov>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub tag_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A raw parsed sentence: (surface, tag) pairs before label interning.
pub type RawSentence = Vec<(String, String)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagScheme {
    Bio,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioMode {
    Strict,
    Lenient,
}

/// Ordered label inventory with reverse lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let mut set = Self::new();
        for n in &names {
            set.intern(n);
        }
        set
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub labels: LabelSet,
    pub scheme: TagScheme,
}

/// Parse CoNLL column text: one token per line, whitespace-separated
/// columns, sentences separated by blank lines.
pub fn read_conll<R: Read>(
    reader: R,
    token_column: usize,
    tag_column: usize,
) -> Result<Vec<RawSentence>> {
    let mut sentences = Vec::new();
    let mut current: RawSentence = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        let need = token_column.max(tag_column) + 1;
        if cols.len() < need {
            return Err(CoreError::MalformedLine {
                line: lineno + 1,
                msg: format!("expected at least {} columns, got {}", need, cols.len()),
            });
        }
        current.push((cols[token_column].to_string(), cols[tag_column].to_string()));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Render raw sentences back to two-column CoNLL text.
pub fn write_conll(sentences: &[RawSentence]) -> String {
    let mut out = String::new();
    for (i, sent) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (tok, tag) in sent {
            out.push_str(tok);
            out.push(' ');
            out.push_str(tag);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioViolation {
    pub pos: usize,
    pub label: String,
}

/// Check a BIO tag sequence: every I-X must continue a chunk of type X.
pub fn validate_bio<S: AsRef<str>>(tags: &[S]) -> Result<Vec<BioViolation>> {
    let mut violations = Vec::new();
    let mut prev_type: Option<&str> = None;
    for (pos, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == "O" {
            prev_type = None;
        } else if let Some(ty) = tag.strip_prefix("B-") {
            prev_type = Some(ty);
        } else if let Some(ty) = tag.strip_prefix("I-") {
            if prev_type != Some(ty) {
                violations.push(BioViolation {
                    pos,
                    label: tag.to_string(),
                });
            }
            prev_type = Some(ty);
        } else {
            return Err(CoreError::BadLabel {
                label: tag.to_string(),
                pos,
            });
        }
    }
    Ok(violations)
}

/// Rewrite orphaned I-X tags to B-X in place; returns the repair count.
pub fn repair_bio(tags: &mut [String]) -> usize {
    let mut repaired = 0;
    let mut prev_type: Option<String> = None;
    for tag in tags.iter_mut() {
        if tag == "O" {
            prev_type = None;
        } else if let Some(ty) = tag.strip_prefix("B-") {
            prev_type = Some(ty.to_string());
        } else if let Some(ty) = tag.strip_prefix("I-") {
            if prev_type.as_deref() != Some(ty) {
                let ty = ty.to_string();
                *tag = format!("B-{ty}");
                prev_type = Some(ty);
                repaired += 1;
            } else {
                prev_type = Some(ty.to_string());
            }
        }
    }
    repaired
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub oov_index: usize,
    pub lowercase: bool,
}

impl WordVocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn normalize(&self, surface: &str) -> String {
        if self.lowercase {
            surface.to_lowercase()
        } else {
            surface.to_string()
        }
    }

    /// Map a surface form to its index, falling back to the OOV index.
    pub fn lookup(&self, surface: &str) -> usize {
        self.index
            .get(self.normalize(surface).as_str())
            .copied()
            .unwrap_or(self.oov_index)
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn from_words(words: Vec<String>, oov_index: usize, lowercase: bool) -> Self {
        let mut v = Self {
            words,
            index: HashMap::new(),
            oov_index,
            lowercase,
        };
        v.rebuild_index();
        v
    }
}

/// Build the word vocabulary from the training split. Words are ordered by
/// first occurrence; the OOV token is appended last.
pub fn build_vocab(train: &[Sentence], min_count: usize, lowercase: bool) -> WordVocab {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for sent in train {
        for tok in &sent.tokens {
            let w = if lowercase {
                tok.surface.to_lowercase()
            } else {
                tok.surface.clone()
            };
            let c = counts.entry(w.clone()).or_insert(0);
            if *c == 0 {
                order.push(w);
            }
            *c += 1;
        }
    }
    let mut words: Vec<String> = order
        .into_iter()
        .filter(|w| counts[w] >= min_count)
        .collect();
    let oov_index = words.len();
    words.push(OOV_TOKEN.to_string());
    WordVocab::from_words(words, oov_index, lowercase)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
    pub unknown_index: usize,
}

impl Alphabet {
    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn lookup(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(self.unknown_index)
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .chars
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i))
            .collect();
    }

    pub fn from_chars(chars: Vec<char>, unknown_index: usize) -> Self {
        let mut a = Self {
            chars,
            index: HashMap::new(),
            unknown_index,
        };
        a.rebuild_index();
        a
    }

    /// Lowercase ASCII letters plus the unknown bucket; used when feature
    /// extraction is requested without a trained model.
    pub fn ascii_default() -> Self {
        let chars: Vec<char> = ('a'..='z').collect();
        let unknown_index = chars.len();
        let mut chars = chars;
        chars.push('\u{0}'); // placeholder slot for the unknown bucket
        Alphabet::from_chars(chars, unknown_index)
    }
}

/// Build the character alphabet from training surfaces, ordered by first
/// occurrence, with a trailing unknown bucket.
pub fn build_alphabet(train: &[Sentence]) -> Alphabet {
    let mut seen: HashMap<char, ()> = HashMap::new();
    let mut chars: Vec<char> = Vec::new();
    for sent in train {
        for tok in &sent.tokens {
            for c in tok.surface.chars() {
                if seen.insert(c, ()).is_none() {
                    chars.push(c);
                }
            }
        }
    }
    let unknown_index = chars.len();
    chars.push('\u{0}');
    Alphabet::from_chars(chars, unknown_index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<Scalar>,
}

impl EmbeddingMatrix {
    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Load pretrained vectors for the vocabulary. Lines are
/// `word v1 ... vdim`; vocab words missing from the file (including the
/// OOV token) are initialized from uniform(-0.5/dim, 0.5/dim) seeded by
/// `seed`, so two loads with the same seed are identical.
pub fn load_embeddings<R: Read>(
    reader: R,
    vocab: &WordVocab,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let mut found: HashMap<usize, Vec<Scalar>> = HashMap::new();
    let word_to_idx: HashMap<&str, usize> = vocab
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap();
        let Some(&idx) = word_to_idx.get(word) else {
            continue;
        };
        let vals: std::result::Result<Vec<Scalar>, _> =
            parts.map(|p| p.parse::<Scalar>()).collect();
        let vals = vals.map_err(|e| CoreError::MalformedLine {
            line: lineno + 1,
            msg: format!("bad float: {e}"),
        })?;
        if vals.len() != dim {
            return Err(CoreError::EmbeddingDim {
                line: lineno + 1,
                expected: dim,
                got: vals.len(),
            });
        }
        found.insert(idx, vals);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    let uni = Uniform::new_inclusive(-bound, bound);
    let mut values = Vec::with_capacity(vocab.len() * dim);
    for i in 0..vocab.len() {
        match found.get(&i) {
            Some(v) => values.extend_from_slice(v),
            None => values.extend((0..dim).map(|_| uni.sample(&mut rng) as Scalar)),
        }
    }
    Ok(EmbeddingMatrix {
        rows: vocab.len(),
        dim,
        values,
    })
}

impl Dataset {
    /// Intern raw sentences against (and extending) a label inventory.
    pub fn intern_split(raw: &[RawSentence], labels: &mut LabelSet) -> Vec<Sentence> {
        raw.iter()
            .map(|sent| Sentence {
                tokens: sent
                    .iter()
                    .map(|(tok, tag)| Token {
                        surface: tok.clone(),
                        tag_id: labels.intern(tag),
                    })
                    .collect(),
            })
            .collect()
    }

    /// Assemble a dataset from parsed splits, applying the BIO policy to
    /// the training split when the scheme is BIO.
    pub fn from_raw(
        mut train: Vec<RawSentence>,
        dev: Vec<RawSentence>,
        test: Vec<RawSentence>,
        scheme: TagScheme,
        mode: BioMode,
    ) -> Result<Self> {
        if scheme == TagScheme::Bio {
            for sent in train.iter_mut() {
                let tags: Vec<&str> = sent.iter().map(|(_, t)| t.as_str()).collect();
                let violations = validate_bio(&tags)?;
                if !violations.is_empty() {
                    match mode {
                        BioMode::Strict => return Err(CoreError::BioViolation(violations)),
                        BioMode::Lenient => {
                            let mut tags: Vec<String> =
                                sent.iter().map(|(_, t)| t.clone()).collect();
                            let n = repair_bio(&mut tags);
                            eprintln!("warning: repaired {n} BIO violation(s) in training data");
                            for ((_, t), fixed) in sent.iter_mut().zip(tags) {
                                *t = fixed;
                            }
                        }
                    }
                }
            }
        }
        let mut labels = LabelSet::new();
        let train = Self::intern_split(&train, &mut labels);
        let dev = Self::intern_split(&dev, &mut labels);
        let test = Self::intern_split(&test, &mut labels);
        Ok(Dataset {
            train,
            dev,
            test,
            labels,
            scheme,
        })
    }

    /// Load `train.txt` (required) plus optional `dev.txt` / `test.txt`
    /// from a directory.
    pub fn load_dir(
        dir: &Path,
        token_column: usize,
        tag_column: usize,
        scheme: TagScheme,
        mode: BioMode,
    ) -> Result<Self> {
        let read = |name: &str, required: bool| -> Result<Vec<RawSentence>> {
            let path = dir.join(name);
            if !path.exists() {
                if required {
                    return Err(CoreError::Config(format!("missing {}", path.display())));
                }
                return Ok(Vec::new());
            }
            read_conll(std::fs::File::open(path)?, token_column, tag_column)
        };
        let train = read("train.txt", true)?;
        let dev = read("dev.txt", false)?;
        let test = read("test.txt", false)?;
        Self::from_raw(train, dev, test, scheme, mode)
    }

    /// Tag names of one sentence's gold labels.
    pub fn tag_names(&self, sent: &Sentence) -> Vec<String> {
        sent.tokens
            .iter()
            .map(|t| self.labels.name(t.tag_id).to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(words: &[&str]) -> Sentence {
        Sentence {
            tokens: words
                .iter()
                .map(|w| Token {
                    surface: w.to_string(),
                    tag_id: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn read_conll_basic() {
        let text = "EU B-ORG\nrejects O\n\n";
        let sents = read_conll(text.as_bytes(), 0, 1).unwrap();
        assert_eq!(sents.len(), 1);
        assert_eq!(sents[0][0], ("EU".to_string(), "B-ORG".to_string()));
        assert_eq!(sents[0][1], ("rejects".to_string(), "O".to_string()));
    }

    #[test]
    fn read_conll_empty() {
        let sents = read_conll("".as_bytes(), 0, 1).unwrap();
        assert!(sents.is_empty());
    }

    #[test]
    fn read_conll_three_blocks() {
        let text = "a O\n\nb O\n\nc O\n\n\n";
        let sents = read_conll(text.as_bytes(), 0, 1).unwrap();
        assert_eq!(sents.len(), 3);
    }

    #[test]
    fn read_conll_too_few_columns() {
        let text = "a O\nb\n";
        let err = read_conll(text.as_bytes(), 0, 1).unwrap_err();
        match err {
            CoreError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn read_conll_column_selection() {
        let text = "1 EU NNP B-ORG\n";
        let sents = read_conll(text.as_bytes(), 1, 3).unwrap();
        assert_eq!(sents[0][0], ("EU".to_string(), "B-ORG".to_string()));
    }

    #[test]
    fn bio_canonical_chunk_ok() {
        let v = validate_bio(&["B-LOC", "I-LOC", "O"]).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn bio_orphan_inside() {
        let v = validate_bio(&["O", "I-LOC"]).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].pos, 1);
    }

    #[test]
    fn bio_type_switch() {
        let v = validate_bio(&["B-LOC", "I-ORG"]).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].pos, 1);
    }

    #[test]
    fn bio_bad_label() {
        assert!(validate_bio(&["X-LOC"]).is_err());
    }

    /// Brute-force check over all 2-tag sequences of a small label set.
    #[test]
    fn bio_two_tag_enumeration() {
        let labels = ["O", "B-LOC", "I-LOC", "B-ORG", "I-ORG"];
        for a in labels {
            for b in labels {
                let got = validate_bio(&[a, b]).unwrap();
                // independent brute-force: I-X is valid iff preceded by
                // B-X or I-X of the same type
                let mut expected = Vec::new();
                if let Some(ty) = a.strip_prefix("I-") {
                    expected.push((0usize, format!("I-{ty}")));
                }
                if let Some(ty) = b.strip_prefix("I-") {
                    let ok = a == format!("B-{ty}") || a == format!("I-{ty}");
                    if !ok {
                        expected.push((1, format!("I-{ty}")));
                    }
                }
                let got: Vec<(usize, String)> =
                    got.into_iter().map(|v| (v.pos, v.label)).collect();
                assert_eq!(got, expected, "sequence [{a}, {b}]");
            }
        }
    }

    #[test]
    fn repair_orphans() {
        let mut tags = vec!["O".to_string(), "I-LOC".to_string(), "I-LOC".to_string()];
        let n = repair_bio(&mut tags);
        assert_eq!(n, 1);
        assert_eq!(tags, ["O", "B-LOC", "I-LOC"]);
    }

    #[test]
    fn vocab_min_count() {
        let train = vec![sent(&["a", "a", "a", "b"])];
        let v = build_vocab(&train, 1, false);
        assert_eq!(v.len(), 3);
        assert_eq!(v.lookup("a"), 0);
        assert_eq!(v.lookup("b"), 1);
        let v2 = build_vocab(&train, 2, false);
        assert_eq!(v2.len(), 2);
        assert_eq!(v2.lookup("b"), v2.oov_index);
    }

    #[test]
    fn vocab_oov_lookup() {
        let train = vec![sent(&["a"])];
        let v = build_vocab(&train, 1, false);
        assert_eq!(v.lookup("unseen"), v.oov_index);
    }

    #[test]
    fn vocab_lowercase_policy() {
        let train = vec![sent(&["Apple", "apple"])];
        let v = build_vocab(&train, 1, true);
        // one entry plus OOV
        assert_eq!(v.len(), 2);
        assert_eq!(v.lookup("APPLE"), v.lookup("apple"));
    }

    #[test]
    fn alphabet_basic() {
        let train = vec![sent(&["ab", "ba"])];
        let a = build_alphabet(&train);
        assert_eq!(a.len(), 3);
        assert_eq!(a.lookup('a'), 0);
        assert_eq!(a.lookup('b'), 1);
        assert_eq!(a.lookup('z'), a.unknown_index);
    }

    #[test]
    fn alphabet_distinct_count() {
        let word: String = ('a'..='z').collect();
        let train = vec![sent(&[&word])];
        let a = build_alphabet(&train);
        // independent count of distinct characters
        let distinct: std::collections::HashSet<char> = word.chars().collect();
        assert_eq!(a.len(), distinct.len() + 1);
        assert_eq!(a.len(), 27);
    }

    #[test]
    fn embeddings_found_and_missing() {
        let v = WordVocab::from_words(vec!["a".into(), OOV_TOKEN.into()], 1, false);
        let file = "a 1.0 2.0\n";
        let m = load_embeddings(file.as_bytes(), &v, 2, 7).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0]);
        let m2 = load_embeddings(file.as_bytes(), &v, 2, 7).unwrap();
        assert_eq!(m.row(1), m2.row(1), "seeded init must be reproducible");
        let m3 = load_embeddings(file.as_bytes(), &v, 2, 8).unwrap();
        assert_ne!(m.row(1), m3.row(1));
        let bound = 0.5 / 2.0;
        assert!(m.row(1).iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn embeddings_dim_mismatch() {
        let v = WordVocab::from_words(vec!["a".into(), OOV_TOKEN.into()], 1, false);
        let err = load_embeddings("a 1.0\n".as_bytes(), &v, 2, 0).unwrap_err();
        match err {
            CoreError::EmbeddingDim { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn dataset_strict_rejects_bad_bio() {
        let train = vec![vec![("x".to_string(), "I-LOC".to_string())]];
        let err = Dataset::from_raw(train, vec![], vec![], TagScheme::Bio, BioMode::Strict);
        assert!(err.is_err());
    }

    #[test]
    fn dataset_lenient_repairs() {
        let train = vec![vec![("x".to_string(), "I-LOC".to_string())]];
        let d =
            Dataset::from_raw(train, vec![], vec![], TagScheme::Bio, BioMode::Lenient).unwrap();
        assert_eq!(d.labels.name(d.train[0].tokens[0].tag_id), "B-LOC");
    }
}
