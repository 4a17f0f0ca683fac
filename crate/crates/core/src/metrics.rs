//! Chunk-level precision/recall/F1 under the conlleval convention, plus
//! pooled token accuracy.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TypeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
    pub per_type: BTreeMap<String, TypeMetrics>,
}

fn prf(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    let p = if predicted == 0 {
        0.0
    } else {
        100.0 * correct as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        100.0 * correct as f64 / gold as f64
    };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Extract (type, start, end) chunks from a BIO tag sequence, segmenting
/// leniently: an I-X that does not continue an X chunk starts a new one,
/// matching the reference scorer.
pub fn extract_chunks(tags: &[String]) -> Vec<(String, usize, usize)> {
    let mut chunks = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (pos, tag) in tags.iter().enumerate() {
        let (starts, ty) = if tag == "O" {
            (false, None)
        } else if let Some(t) = tag.strip_prefix("B-") {
            (true, Some(t))
        } else if let Some(t) = tag.strip_prefix("I-") {
            let continues = matches!(&open, Some((cur, _)) if cur == t);
            (!continues, Some(t))
        } else {
            // non-BIO label: treat the whole tag as a chunk type
            let continues = matches!(&open, Some((cur, _)) if cur == tag.as_str());
            (!continues, Some(tag.as_str()))
        };
        match ty {
            None => {
                if let Some((cur, start)) = open.take() {
                    chunks.push((cur, start, pos));
                }
            }
            Some(t) => {
                if starts {
                    if let Some((cur, start)) = open.take() {
                        chunks.push((cur, start, pos));
                    }
                    open = Some((t.to_string(), pos));
                }
            }
        }
    }
    if let Some((cur, start)) = open {
        chunks.push((cur, start, tags.len()));
    }
    chunks
}

/// Micro-averaged chunk P/R/F1 over aligned gold/predicted sentences.
/// A predicted chunk is correct only on exact (type, start, end) match.
pub fn chunk_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<ChunkMetrics> {
    if gold.len() != pred.len() {
        return Err(CoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new(); // correct, predicted, gold
    let (mut n_correct, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (g_tags, p_tags) in gold.iter().zip(pred) {
        if g_tags.len() != p_tags.len() {
            return Err(CoreError::LengthMismatch {
                gold: g_tags.len(),
                pred: p_tags.len(),
            });
        }
        let g_chunks = extract_chunks(g_tags);
        let p_chunks = extract_chunks(p_tags);
        for c in &g_chunks {
            counts.entry(c.0.clone()).or_default().2 += 1;
        }
        for c in &p_chunks {
            counts.entry(c.0.clone()).or_default().1 += 1;
            if g_chunks.contains(c) {
                counts.entry(c.0.clone()).or_default().0 += 1;
                n_correct += 1;
            }
        }
        n_pred += p_chunks.len();
        n_gold += g_chunks.len();
    }
    let (precision, recall, f1) = prf(n_correct, n_pred, n_gold);
    let per_type = counts
        .into_iter()
        .map(|(ty, (correct, predicted, gold))| {
            let (p, r, f) = prf(correct, predicted, gold);
            (
                ty,
                TypeMetrics {
                    precision: p,
                    recall: r,
                    f1: f,
                    predicted,
                    gold,
                    correct,
                },
            )
        })
        .collect();
    Ok(ChunkMetrics {
        precision,
        recall,
        f1,
        predicted: n_pred,
        gold: n_gold,
        correct: n_correct,
        per_type,
    })
}

/// Pooled token accuracy in percent: matches over all tokens of all
/// sentences, not a per-sentence mean.
pub fn token_accuracy(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(CoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut matches = 0usize;
    let mut total = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(CoreError::LengthMismatch {
                gold: g.len(),
                pred: p.len(),
            });
        }
        total += g.len();
        matches += g.iter().zip(p).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * matches as f64 / total as f64)
}
