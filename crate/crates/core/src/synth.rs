//! Synthetic tagging corpus for desk-scale end-to-end checks: each
//! token's tag is a deterministic function of its suffix and
//! capitalization, with disjoint train and held-out word pools so the
//! character channel is the only route to generalization.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawSentence;

/// Tag rule: capitalized → B-PER; suffix "xx" → B-LOC; suffix "yy" →
/// B-ORG; otherwise O.
pub fn tag_for(word: &str) -> &'static str {
    if word.chars().next().is_some_and(|c| c.is_uppercase()) {
        "B-PER"
    } else if word.ends_with("xx") {
        "B-LOC"
    } else if word.ends_with("yy") {
        "B-ORG"
    } else {
        "O"
    }
}

pub struct SynthCorpus {
    pub train: Vec<RawSentence>,
    pub heldout: Vec<RawSentence>,
}

fn stem<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(3..=6);
    // stems avoid the suffix letters entirely
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..13)) as char)
        .collect()
}

fn word_pool<R: Rng>(rng: &mut R, per_class: usize) -> Vec<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut classes: Vec<Vec<String>> = vec![Vec::new(); 4];
    while classes.iter().any(|c| c.len() < per_class) {
        let s = stem(rng);
        if !seen.insert(s.clone()) {
            continue;
        }
        let class = classes
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| c.len())
            .unwrap()
            .0;
        let word = match class {
            0 => {
                let mut c = s.chars();
                let head = c.next().unwrap().to_uppercase().to_string();
                format!("{head}{}", c.as_str())
            }
            1 => format!("{s}xx"),
            2 => format!("{s}yy"),
            _ => s,
        };
        if classes[class].len() < per_class {
            classes[class].push(word);
        }
    }
    classes
}

fn sentences<R: Rng>(
    rng: &mut R,
    pool: &[Vec<String>],
    count: usize,
) -> Vec<RawSentence> {
    (0..count)
        .map(|_| {
            let len = rng.gen_range(4..=8);
            (0..len)
                .map(|_| {
                    let class = rng.gen_range(0..pool.len());
                    let word = pool[class].choose(rng).unwrap().clone();
                    let tag = tag_for(&word).to_string();
                    (word, tag)
                })
                .collect()
        })
        .collect()
}

/// Build a corpus with `n_train` training sentences and `n_heldout`
/// held-out sentences over disjoint word pools.
pub fn generate(seed: u64, n_train: usize, n_heldout: usize, words_per_class: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_pool = word_pool(&mut rng, words_per_class);
    let mut heldout_pool = word_pool(&mut rng, words_per_class);
    // enforce disjointness against the training pool
    let train_words: std::collections::HashSet<&String> =
        train_pool.iter().flatten().collect();
    for class in heldout_pool.iter_mut() {
        class.retain(|w| !train_words.contains(w));
        assert!(!class.is_empty(), "held-out pool emptied by disjointness filter");
    }
    SynthCorpus {
        train: sentences(&mut rng, &train_pool, n_train),
        heldout: sentences(&mut rng, &heldout_pool, n_heldout),
    }
}
