//! Linear-chain CRF: forward-algorithm partition function, log-likelihood
//! with analytic gradients via forward-backward, and exact Viterbi
//! decoding. Transition scores include distinguished START and STOP
//! states, so the matrix is (L+2)².

use crate::nn::tensor::Tensor;
use crate::Scalar;

/// Transition parameter layout over `num_labels + 2` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrfParams {
    pub num_labels: usize,
}

impl CrfParams {
    pub fn new(num_labels: usize) -> Self {
        Self { num_labels }
    }

    pub fn start(&self) -> usize {
        self.num_labels
    }

    pub fn stop(&self) -> usize {
        self.num_labels + 1
    }

    pub fn states(&self) -> usize {
        self.num_labels + 2
    }

    /// Zero-initialized transition tensor of shape [L+2, L+2].
    pub fn zero_transitions(&self) -> Tensor {
        Tensor::zeros(&[self.states(), self.states()])
    }
}

fn logsumexp(xs: &[Scalar]) -> Scalar {
    let max = xs.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<Scalar>().ln()
}

fn trans(t: &Tensor, from: usize, to: usize) -> Scalar {
    t.values[from * t.cols() + to]
}

/// log of the partition function over all label paths, by the forward
/// algorithm with logsumexp stabilization.
pub fn log_z(emissions: &[Vec<Scalar>], transitions: &Tensor, crf: &CrfParams) -> Scalar {
    let l = crf.num_labels;
    let t_len = emissions.len();
    assert!(t_len > 0, "empty sequence");
    let mut alpha: Vec<Scalar> = (0..l)
        .map(|j| trans(transitions, crf.start(), j) + emissions[0][j])
        .collect();
    let mut scratch = vec![0.0; l];
    for t in 1..t_len {
        let mut next = vec![0.0; l];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..l {
                scratch[i] = alpha[i] + trans(transitions, i, j);
            }
            *slot = logsumexp(&scratch) + emissions[t][j];
        }
        alpha = next;
    }
    let finals: Vec<Scalar> = (0..l)
        .map(|j| alpha[j] + trans(transitions, j, crf.stop()))
        .collect();
    logsumexp(&finals)
}

/// Score of one path: emissions plus transitions including START→first
/// and last→STOP.
pub fn path_score(
    emissions: &[Vec<Scalar>],
    transitions: &Tensor,
    crf: &CrfParams,
    path: &[usize],
) -> Scalar {
    assert_eq!(path.len(), emissions.len());
    let mut score = trans(transitions, crf.start(), path[0]);
    for (t, &y) in path.iter().enumerate() {
        score += emissions[t][y];
        if t + 1 < path.len() {
            score += trans(transitions, y, path[t + 1]);
        }
    }
    score + trans(transitions, *path.last().unwrap(), crf.stop())
}

/// log P(gold | emissions) = score(gold) − logZ. Always ≤ 0.
pub fn log_likelihood(
    emissions: &[Vec<Scalar>],
    transitions: &Tensor,
    crf: &CrfParams,
    gold: &[usize],
) -> Scalar {
    path_score(emissions, transitions, crf, gold) - log_z(emissions, transitions, crf)
}

/// Log-likelihood plus gradients of the *negative* log-likelihood with
/// respect to emissions and transitions, computed by forward-backward
/// marginals.
pub fn log_likelihood_with_grads(
    emissions: &[Vec<Scalar>],
    transitions: &Tensor,
    crf: &CrfParams,
    gold: &[usize],
) -> (Scalar, Vec<Vec<Scalar>>, Tensor) {
    let l = crf.num_labels;
    let t_len = emissions.len();
    assert_eq!(gold.len(), t_len);

    // forward
    let mut alpha = vec![vec![0.0 as Scalar; l]; t_len];
    for j in 0..l {
        alpha[0][j] = trans(transitions, crf.start(), j) + emissions[0][j];
    }
    let mut scratch = vec![0.0; l];
    for t in 1..t_len {
        for j in 0..l {
            for i in 0..l {
                scratch[i] = alpha[t - 1][i] + trans(transitions, i, j);
            }
            alpha[t][j] = logsumexp(&scratch) + emissions[t][j];
        }
    }
    let finals: Vec<Scalar> = (0..l)
        .map(|j| alpha[t_len - 1][j] + trans(transitions, j, crf.stop()))
        .collect();
    let log_z = logsumexp(&finals);

    // backward
    let mut beta = vec![vec![0.0 as Scalar; l]; t_len];
    for j in 0..l {
        beta[t_len - 1][j] = trans(transitions, j, crf.stop());
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..l {
            for j in 0..l {
                scratch[j] = trans(transitions, i, j) + emissions[t + 1][j] + beta[t + 1][j];
            }
            beta[t][i] = logsumexp(&scratch);
        }
    }

    // gradients of -LL: marginal minus gold indicator
    let mut d_em = vec![vec![0.0 as Scalar; l]; t_len];
    let mut d_trans = Tensor::zeros(&transitions.shape);
    let states = crf.states();
    for t in 0..t_len {
        for j in 0..l {
            let marginal = (alpha[t][j] + beta[t][j] - log_z).exp();
            d_em[t][j] = marginal - if gold[t] == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..l {
        let marginal = (alpha[0][j] + beta[0][j] - log_z).exp();
        d_trans.values[crf.start() * states + j] =
            marginal - if gold[0] == j { 1.0 } else { 0.0 };
        let marginal_last = (alpha[t_len - 1][j] + beta[t_len - 1][j] - log_z).exp();
        d_trans.values[j * states + crf.stop()] =
            marginal_last - if gold[t_len - 1] == j { 1.0 } else { 0.0 };
    }
    for t in 0..t_len - 1 {
        for i in 0..l {
            for j in 0..l {
                let pair = (alpha[t][i]
                    + trans(transitions, i, j)
                    + emissions[t + 1][j]
                    + beta[t + 1][j]
                    - log_z)
                    .exp();
                let indicator = if gold[t] == i && gold[t + 1] == j {
                    1.0
                } else {
                    0.0
                };
                d_trans.values[i * states + j] += pair - indicator;
            }
        }
    }

    let ll = path_score(emissions, transitions, crf, gold) - log_z;
    (ll, d_em, d_trans)
}

/// Exact max-scoring path; backpointer ties break toward the lower label
/// index.
pub fn viterbi_decode(
    emissions: &[Vec<Scalar>],
    transitions: &Tensor,
    crf: &CrfParams,
) -> (Vec<usize>, Scalar) {
    let l = crf.num_labels;
    let t_len = emissions.len();
    assert!(t_len > 0, "empty sequence");
    let mut score: Vec<Scalar> = (0..l)
        .map(|j| trans(transitions, crf.start(), j) + emissions[0][j])
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len);
    for t in 1..t_len {
        let mut next = vec![0.0 as Scalar; l];
        let mut ptrs = vec![0usize; l];
        for j in 0..l {
            let mut best_i = 0;
            let mut best = score[0] + trans(transitions, 0, j);
            for i in 1..l {
                let cand = score[i] + trans(transitions, i, j);
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + emissions[t][j];
            ptrs[j] = best_i;
        }
        score = next;
        back.push(ptrs);
    }
    let mut best_j = 0;
    let mut best = score[0] + trans(transitions, 0, crf.stop());
    for j in 1..l {
        let cand = score[j] + trans(transitions, j, crf.stop());
        if cand > best {
            best = cand;
            best_j = j;
        }
    }
    let mut path = vec![best_j];
    for ptrs in back.iter().rev() {
        path.push(ptrs[*path.last().unwrap()]);
    }
    path.reverse();
    (path, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: enumerate all |labels|^length paths.
    fn brute_force(
        emissions: &[Vec<Scalar>],
        transitions: &Tensor,
        crf: &CrfParams,
    ) -> (Scalar, Vec<usize>, Scalar) {
        let l = crf.num_labels;
        let t = emissions.len();
        let total = l.pow(t as u32);
        let mut scores = Vec::with_capacity(total);
        let mut best_path = Vec::new();
        let mut best = Scalar::NEG_INFINITY;
        for idx in 0..total {
            let mut path = Vec::with_capacity(t);
            let mut rem = idx;
            for _ in 0..t {
                path.push(rem % l);
                rem /= l;
            }
            let s = path_score(emissions, transitions, crf, &path);
            scores.push(s);
            if s > best {
                best = s;
                best_path = path;
            }
        }
        let max = scores.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
        let lz = max + scores.iter().map(|s| (s - max).exp()).sum::<Scalar>().ln();
        (lz, best_path, best)
    }

    fn random_instance<R: Rng>(
        rng: &mut R,
        labels: usize,
        len: usize,
    ) -> (Vec<Vec<Scalar>>, Tensor, CrfParams) {
        let crf = CrfParams::new(labels);
        let emissions: Vec<Vec<Scalar>> = (0..len)
            .map(|_| (0..labels).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut transitions = crf.zero_transitions();
        for v in transitions.values.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        (emissions, transitions, crf)
    }

    #[test]
    fn uniform_case() {
        let crf = CrfParams::new(2);
        let emissions = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let transitions = crf.zero_transitions();
        let lz = log_z(&emissions, &transitions, &crf);
        assert!((lz - (4.0 as Scalar).ln()).abs() < 1e-12);
        let ll = log_likelihood(&emissions, &transitions, &crf, &[0, 1]);
        assert!((ll + (4.0 as Scalar).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_z_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let labels = rng.gen_range(1..=4);
            let len = rng.gen_range(1..=6);
            let (em, tr, crf) = random_instance(&mut rng, labels, len);
            let lz = log_z(&em, &tr, &crf);
            let (lz_bf, _, _) = brute_force(&em, &tr, &crf);
            assert!((lz - lz_bf).abs() < 1e-8, "logZ {lz} vs brute {lz_bf}");
        }
    }

    #[test]
    fn ll_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..50 {
            let labels = rng.gen_range(2..=4);
            let len = rng.gen_range(1..=5);
            let (em, tr, crf) = random_instance(&mut rng, labels, len);
            let gold: Vec<usize> = (0..len).map(|_| rng.gen_range(0..labels)).collect();
            let ll = log_likelihood(&em, &tr, &crf, &gold);
            assert!(ll <= 1e-12, "LL must be ≤ 0, got {ll}");
        }
    }

    #[test]
    fn viterbi_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..50 {
            let labels = rng.gen_range(1..=4);
            let len = rng.gen_range(1..=6);
            let (em, tr, crf) = random_instance(&mut rng, labels, len);
            let (path, score) = viterbi_decode(&em, &tr, &crf);
            let (_, bf_path, bf_score) = brute_force(&em, &tr, &crf);
            assert!(
                (score - bf_score).abs() < 1e-10,
                "score {score} vs brute {bf_score}"
            );
            // with continuous random scores ties have measure zero, so
            // paths must agree
            assert_eq!(path, bf_path);
        }
    }

    #[test]
    fn zero_transitions_decode_is_argmax() {
        let crf = CrfParams::new(3);
        let emissions = vec![vec![0.1, 0.9, 0.2], vec![0.7, 0.3, 0.5], vec![0.0, 0.0, 1.0]];
        let (path, _) = viterbi_decode(&emissions, &crf.zero_transitions(), &crf);
        assert_eq!(path, vec![1, 0, 2]);
    }

    #[test]
    fn tie_breaks_toward_lower_index() {
        let crf = CrfParams::new(2);
        let emissions = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let (path, _) = viterbi_decode(&emissions, &crf.zero_transitions(), &crf);
        assert_eq!(path, vec![0, 0]);
    }

    #[test]
    fn strong_negative_self_transition_forces_alternation() {
        let crf = CrfParams::new(2);
        // label 0 everywhere is emission-optimal, but 0→0 is forbidden
        let emissions = vec![vec![1.0, 0.0]; 4];
        let mut tr = crf.zero_transitions();
        let states = crf.states();
        tr.values[0 * states + 0] = -100.0;
        let (path, score) = viterbi_decode(&emissions, &tr, &crf);
        let (_, bf_path, bf_score) = brute_force(&emissions, &tr, &crf);
        assert_eq!(path, bf_path);
        assert!((score - bf_score).abs() < 1e-10);
        for w in path.windows(2) {
            assert!(!(w[0] == 0 && w[1] == 0), "0→0 transition survived: {path:?}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..10 {
            let labels = rng.gen_range(2..=4);
            let len = rng.gen_range(2..=5);
            let (em, tr, crf) = random_instance(&mut rng, labels, len);
            let gold: Vec<usize> = (0..len).map(|_| rng.gen_range(0..labels)).collect();
            let (_, d_em, d_tr) = log_likelihood_with_grads(&em, &tr, &crf, &gold);

            let h = 1e-6;
            for t in 0..len {
                for j in 0..labels {
                    let mut em_p = em.clone();
                    em_p[t][j] += h;
                    let mut em_m = em.clone();
                    em_m[t][j] -= h;
                    let numeric = -(log_likelihood(&em_p, &tr, &crf, &gold)
                        - log_likelihood(&em_m, &tr, &crf, &gold))
                        / (2.0 * h);
                    assert!(
                        (d_em[t][j] - numeric).abs() < 1e-6,
                        "emission grad ({t},{j}): {} vs {numeric}",
                        d_em[t][j]
                    );
                }
            }
            for idx in 0..tr.numel() {
                let mut tr_p = tr.clone();
                tr_p.values[idx] += h;
                let mut tr_m = tr.clone();
                tr_m.values[idx] -= h;
                let numeric = -(log_likelihood(&em, &tr_p, &crf, &gold)
                    - log_likelihood(&em, &tr_m, &crf, &gold))
                    / (2.0 * h);
                assert!(
                    (d_tr.values[idx] - numeric).abs() < 1e-6,
                    "transition grad {idx}: {} vs {numeric}",
                    d_tr.values[idx]
                );
            }
        }
    }
}
