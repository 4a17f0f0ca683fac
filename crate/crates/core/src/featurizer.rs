//! Sparse character-level word features: n-gram driven word splitting,
//! bag-of-characters per piece, character order and word length features,
//! sum-normalization and the per-word feature cache.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{Alphabet, Sentence};
use crate::error::{CoreError, Result};
use crate::Scalar;

pub const MAX_WORD_LENGTH: usize = 20;
pub const LENGTH_DIMS: usize = MAX_WORD_LENGTH + 1;
pub const ORDER_DIMS: usize = 3;
pub const DEFAULT_MAX_N: usize = 8;

/// Corpus frequency of character substrings of length 2..=max_n,
/// token-frequency weighted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramStats {
    counts: HashMap<String, u64>,
    pub max_n: usize,
}

impl NgramStats {
    pub fn empty(max_n: usize) -> Self {
        Self {
            counts: HashMap::new(),
            max_n,
        }
    }

    /// Frequency of `s`; substrings longer than max_n count as zero.
    pub fn count(&self, s: &str) -> u64 {
        self.counts.get(s).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// One `substring<TAB>count` line per entry, sorted by count
    /// descending then lexicographic, preceded by a `max_n=<N>` header.
    pub fn to_text(&self) -> String {
        let mut entries: Vec<(&String, &u64)> = self.counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut out = format!("max_n={}\n", self.max_n);
        for (s, c) in entries {
            out.push_str(s);
            out.push('\t');
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| CoreError::MalformedLine {
                line: 1,
                msg: "missing max_n header".into(),
            })?;
        let max_n = header
            .strip_prefix("max_n=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| CoreError::MalformedLine {
                line: 1,
                msg: format!("bad header {header:?}"),
            })?;
        let mut counts = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (s, c) = line.split_once('\t').ok_or_else(|| CoreError::MalformedLine {
                line: i + 2,
                msg: "expected substring<TAB>count".into(),
            })?;
            let c = c.parse::<u64>().map_err(|e| CoreError::MalformedLine {
                line: i + 2,
                msg: format!("bad count: {e}"),
            })?;
            counts.insert(s.to_string(), c);
        }
        Ok(Self { counts, max_n })
    }
}

/// Count every contiguous substring of length 2..=max_n over all token
/// occurrences in the training split.
pub fn collect_ngram_stats(train: &[Sentence], max_n: usize) -> NgramStats {
    assert!(max_n >= 2, "max_n must be at least 2");
    let mut counts: HashMap<String, u64> = HashMap::new();
    for sent in train {
        for tok in &sent.tokens {
            let chars: Vec<char> = tok.surface.chars().collect();
            for start in 0..chars.len() {
                for n in 2..=max_n.min(chars.len() - start) {
                    let sub: String = chars[start..start + n].iter().collect();
                    *counts.entry(sub).or_insert(0) += 1;
                }
            }
        }
    }
    NgramStats { counts, max_n }
}

/// Exactly k pieces whose concatenation is the source word; empty pieces
/// pad short words at the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieceSplit {
    pub pieces: Vec<String>,
}

/// One merge decision from the splitting loop, kept for auditability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeStep {
    /// Index of the left piece of the merged pair at the time of merging.
    pub index: usize,
    pub merged: String,
    pub count: u64,
}

/// Split a word into exactly k pieces by repeatedly merging the adjacent
/// pair with the highest n-gram count (leftmost on ties or when all
/// candidates are zero), then padding with empty strings.
pub fn split_word(word: &str, stats: &NgramStats, k: usize) -> PieceSplit {
    split_word_traced(word, stats, k).0
}

pub fn split_word_traced(word: &str, stats: &NgramStats, k: usize) -> (PieceSplit, Vec<MergeStep>) {
    assert!(k >= 1, "piece count must be at least 1");
    assert!(!word.is_empty(), "cannot split an empty word");
    let mut pieces: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    let mut trace = Vec::new();
    while pieces.len() > k {
        let mut best = 0usize;
        let mut best_count = 0u64;
        for i in 0..pieces.len() - 1 {
            let cand_len = pieces[i].chars().count() + pieces[i + 1].chars().count();
            let count = if cand_len > stats.max_n {
                0
            } else {
                let cand = format!("{}{}", pieces[i], pieces[i + 1]);
                stats.count(&cand)
            };
            if count > best_count {
                best = i;
                best_count = count;
            }
        }
        let right = pieces.remove(best + 1);
        pieces[best].push_str(&right);
        trace.push(MergeStep {
            index: best,
            merged: pieces[best].clone(),
            count: best_count,
        });
    }
    while pieces.len() < k {
        pieces.push(String::new());
    }
    (PieceSplit { pieces }, trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderClass {
    Ascending,
    Equal,
    Descending,
}

impl OrderClass {
    /// One-hot layout: [ASC, EQ, DES].
    pub fn onehot_index(self) -> usize {
        match self {
            OrderClass::Ascending => 0,
            OrderClass::Equal => 1,
            OrderClass::Descending => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderCounts {
    pub c_asc: usize,
    pub c_des: usize,
    pub klass: OrderClass,
}

/// Count ascending and descending adjacent character pairs by code point;
/// equal-character bigrams contribute to neither.
pub fn char_order(piece: &str) -> OrderCounts {
    let chars: Vec<char> = piece.chars().collect();
    let mut c_asc = 0;
    let mut c_des = 0;
    for pair in chars.windows(2) {
        match pair[0].cmp(&pair[1]) {
            std::cmp::Ordering::Less => c_asc += 1,
            std::cmp::Ordering::Greater => c_des += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let klass = match c_asc.cmp(&c_des) {
        std::cmp::Ordering::Greater => OrderClass::Ascending,
        std::cmp::Ordering::Equal => OrderClass::Equal,
        std::cmp::Ordering::Less => OrderClass::Descending,
    };
    OrderCounts {
        c_asc,
        c_des,
        klass,
    }
}

/// Per-character occurrence counts over the alphabet; unseen characters
/// land in the unknown bucket.
pub fn boc_vector(piece: &str, alphabet: &Alphabet) -> Vec<Scalar> {
    let mut v = vec![0.0 as Scalar; alphabet.len()];
    for c in piece.chars() {
        v[alphabet.lookup(c)] += 1.0;
    }
    v
}

/// 21-dim one-hot of min(char count, 20).
pub fn length_onehot(word: &str) -> Vec<Scalar> {
    let mut v = vec![0.0 as Scalar; LENGTH_DIMS];
    let len = word.chars().count().min(MAX_WORD_LENGTH);
    v[len] = 1.0;
    v
}

/// Divide each entry by the vector sum; an all-zero vector is returned
/// unchanged. Negative entries are a contract violation.
pub fn normalize(v: &[Scalar]) -> Result<Vec<Scalar>> {
    for (i, &x) in v.iter().enumerate() {
        if x < 0.0 {
            return Err(CoreError::NegativeEntry {
                index: i,
                value: x as f64,
            });
        }
    }
    let sum: Scalar = v.iter().sum();
    if sum == 0.0 {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|&x| x / sum).collect())
}

/// Fixed-dimension normalized sparse feature vector of one word.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCharVector {
    pub values: Vec<Scalar>,
}

/// Dimension of the sparse vector: k·(|alphabet|+3) + 21.
pub fn sparse_dim(alphabet_len: usize, k: usize) -> usize {
    k * (alphabet_len + ORDER_DIMS) + LENGTH_DIMS
}

/// The concatenated per-piece BOC + order one-hots plus the length
/// one-hot, before normalization.
pub fn unnormalized_feature(
    word: &str,
    stats: &NgramStats,
    alphabet: &Alphabet,
    k: usize,
) -> Vec<Scalar> {
    let split = split_word(word, stats, k);
    let mut v = Vec::with_capacity(sparse_dim(alphabet.len(), k));
    for piece in &split.pieces {
        v.extend(boc_vector(piece, alphabet));
        let mut order = [0.0 as Scalar; ORDER_DIMS];
        order[char_order(piece).klass.onehot_index()] = 1.0;
        v.extend_from_slice(&order);
    }
    v.extend(length_onehot(word));
    v
}

pub fn featurize_word(
    word: &str,
    stats: &NgramStats,
    alphabet: &Alphabet,
    k: usize,
) -> SparseCharVector {
    let raw = unnormalized_feature(word, stats, alphabet, k);
    SparseCharVector {
        values: normalize(&raw).expect("feature entries are nonnegative by construction"),
    }
}

/// Immutable featurization context plus a concurrent per-word cache.
pub struct Featurizer {
    pub stats: NgramStats,
    pub alphabet: Alphabet,
    pub k: usize,
    cache: RwLock<HashMap<String, Arc<SparseCharVector>>>,
    computations: AtomicU64,
}

impl Featurizer {
    pub fn new(stats: NgramStats, alphabet: Alphabet, k: usize) -> Self {
        Self {
            stats,
            alphabet,
            k,
            cache: RwLock::new(HashMap::new()),
            computations: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        sparse_dim(self.alphabet.len(), self.k)
    }

    /// Cached featurization; a fresh computation and a cache hit return
    /// identical vectors.
    pub fn features(&self, word: &str) -> Arc<SparseCharVector> {
        if let Some(hit) = self.cache.read().unwrap().get(word) {
            return Arc::clone(hit);
        }
        let computed = Arc::new(featurize_word(word, &self.stats, &self.alphabet, self.k));
        self.computations.fetch_add(1, Ordering::Relaxed);
        let mut guard = self.cache.write().unwrap();
        Arc::clone(guard.entry(word.to_string()).or_insert(computed))
    }

    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    pub fn clear_cache(&self) {
        self.cache.write().unwrap().clear();
        self.computations.store(0, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

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

    fn stats_from(pairs: &[(&str, u64)], max_n: usize) -> NgramStats {
        let mut s = NgramStats::empty(max_n);
        for (k, v) in pairs {
            s.counts.insert(k.to_string(), *v);
        }
        s
    }

    fn abc_alphabet() -> Alphabet {
        // {a, b, c, <unk>}
        Alphabet::from_chars(vec!['a', 'b', 'c', '\u{0}'], 3)
    }

    #[test]
    fn ngram_single_token() {
        let s = collect_ngram_stats(&[sent(&["aba"])], 3);
        assert_eq!(s.count("ab"), 1);
        assert_eq!(s.count("ba"), 1);
        assert_eq!(s.count("aba"), 1);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn ngram_token_weighted() {
        let s = collect_ngram_stats(&[sent(&["ab", "ab"])], 2);
        assert_eq!(s.count("ab"), 2);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn ngram_roundtrip_text() {
        let s = collect_ngram_stats(&[sent(&["abab", "ba"])], 4);
        let text = s.to_text();
        let back = NgramStats::from_text(text.as_bytes()).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn ngram_text_sorted() {
        let s = collect_ngram_stats(&[sent(&["abab"])], 2);
        // ab:2, ba:1
        assert_eq!(s.to_text(), "max_n=2\nab\t2\nba\t1\n");
    }

    #[test]
    fn split_merge_order() {
        let stats = stats_from(&[("ab", 5), ("bc", 1), ("cd", 7), ("bcd", 2), ("abc", 0)], 8);
        let split = split_word("abcd", &stats, 2);
        assert_eq!(split.pieces, vec!["ab", "cd"]);
    }

    #[test]
    fn split_pads_short_word() {
        let stats = NgramStats::empty(8);
        let split = split_word("a", &stats, 2);
        assert_eq!(split.pieces, vec!["a", ""]);
    }

    #[test]
    fn split_exact_length_noop() {
        let stats = NgramStats::empty(8);
        let split = split_word("xy", &stats, 2);
        assert_eq!(split.pieces, vec!["x", "y"]);
    }

    #[test]
    fn split_all_zero_counts_merges_leftmost() {
        let stats = NgramStats::empty(8);
        let (split, trace) = split_word_traced("abcd", &stats, 2);
        assert_eq!(split.pieces, vec!["abc", "d"]);
        assert!(trace.iter().all(|m| m.index == 0 && m.count == 0));
    }

    #[test]
    fn split_candidates_beyond_max_n_score_zero() {
        // "abcd" counted highly but max_n=3 makes 4-char merges invisible
        let stats = stats_from(&[("abcd", 100), ("cd", 1)], 3);
        let split = split_word("abcd", &stats, 3);
        assert_eq!(split.pieces, vec!["a", "b", "cd"]);
    }

    #[test]
    fn order_ascending() {
        let o = char_order("abc");
        assert_eq!((o.c_asc, o.c_des), (2, 0));
        assert_eq!(o.klass, OrderClass::Ascending);
    }

    #[test]
    fn order_repeated_ignored() {
        let o = char_order("aa");
        assert_eq!((o.c_asc, o.c_des), (0, 0));
        assert_eq!(o.klass, OrderClass::Equal);
    }

    #[test]
    fn order_empty_piece() {
        assert_eq!(char_order("").klass, OrderClass::Equal);
    }

    #[test]
    fn order_reversal_flips_monotone() {
        // brute force over all 3-char strings from a 4-letter alphabet
        let letters = ['a', 'b', 'c', 'd'];
        for &x in &letters {
            for &y in &letters {
                for &z in &letters {
                    let s: String = [x, y, z].iter().collect();
                    let r: String = s.chars().rev().collect();
                    let fwd = char_order(&s);
                    let bwd = char_order(&r);
                    match fwd.klass {
                        OrderClass::Ascending => assert_eq!(bwd.klass, OrderClass::Descending),
                        OrderClass::Descending => assert_eq!(bwd.klass, OrderClass::Ascending),
                        OrderClass::Equal => assert_eq!(bwd.klass, OrderClass::Equal),
                    }
                }
            }
        }
    }

    #[test]
    fn boc_counts() {
        let a = abc_alphabet();
        assert_eq!(boc_vector("aba", &a), vec![2.0, 1.0, 0.0, 0.0]);
        assert_eq!(boc_vector("az", &a), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(boc_vector("", &a), vec![0.0; 4]);
    }

    #[test]
    fn length_hot_index() {
        assert_eq!(length_onehot("cat")[3], 1.0);
        let long: String = "x".repeat(25);
        assert_eq!(length_onehot(&long)[20], 1.0);
        assert_eq!(length_onehot("")[0], 1.0);
        assert_eq!(length_onehot("cat").iter().sum::<Scalar>(), 1.0);
    }

    #[test]
    fn normalize_basic() {
        assert_eq!(normalize(&[1.0, 1.0, 2.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(normalize(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(normalize(&[3.0]).unwrap(), vec![1.0]);
        assert!(normalize(&[-1.0]).is_err());
    }

    #[test]
    fn feature_dimension() {
        // |alphabet| = 27 incl. unknown, k = 2 → 2·30 + 21 = 81
        assert_eq!(sparse_dim(27, 2), 81);
        let a = Alphabet::ascii_default();
        let v = featurize_word("cat", &NgramStats::empty(8), &a, 2);
        assert_eq!(v.values.len(), 81);
        let sum: Scalar = v.values.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feature_deterministic() {
        let a = abc_alphabet();
        let stats = stats_from(&[("ab", 2)], 8);
        let v1 = featurize_word("abcabc", &stats, &a, 2);
        let v2 = featurize_word("abcabc", &stats, &a, 2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn anagrams_distinct_when_splits_differ() {
        let a = Alphabet::ascii_default();
        let stats = stats_from(&[("li", 10), ("si", 10)], 8);
        let v1 = featurize_word("listen", &stats, &a, 2);
        let v2 = featurize_word("silent", &stats, &a, 2);
        assert_ne!(v1, v2);
    }

    #[test]
    fn cache_memoizes() {
        let f = Featurizer::new(NgramStats::empty(8), Alphabet::ascii_default(), 2);
        let v1 = f.features("hello");
        let v2 = f.features("hello");
        assert_eq!(*v1, *v2);
        assert_eq!(f.computations(), 1);
        let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        for _ in 0..100 {
            for w in &words {
                f.features(w);
            }
        }
        assert_eq!(f.computations(), 101);
    }

    #[test]
    fn cached_equals_fresh() {
        let f = Featurizer::new(NgramStats::empty(8), Alphabet::ascii_default(), 2);
        let cached = f.features("cached");
        let fresh = featurize_word("cached", &f.stats, &f.alphabet, f.k);
        assert_eq!(*cached, fresh);
    }
}
