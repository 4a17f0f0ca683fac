use rand::Rng;

use crate::Scalar;

/// Sample an inverted-dropout mask: entries are 0 with probability
/// 1 - keep_p, otherwise 1/keep_p. Applying the mask at train time makes
/// inference the identity.
pub fn inverted_dropout_mask<R: Rng>(len: usize, keep_p: f64, rng: &mut R) -> Vec<Scalar> {
    assert!(keep_p > 0.0 && keep_p <= 1.0, "keep_p must be in (0, 1]");
    let scale = (1.0 / keep_p) as Scalar;
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < keep_p {
                scale
            } else {
                0.0
            }
        })
        .collect()
}

/// A per-sequence mask reused at every time step (variational recurrent
/// dropout). Same sampling as inverted dropout; reuse is the caller's
/// contract.
pub fn variational_mask<R: Rng>(len: usize, keep_p: f64, rng: &mut R) -> Vec<Scalar> {
    inverted_dropout_mask(len, keep_p, rng)
}

pub fn apply_mask(x: &[Scalar], mask: &[Scalar]) -> Vec<Scalar> {
    assert_eq!(x.len(), mask.len());
    x.iter().zip(mask).map(|(a, b)| a * b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn keep_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mask = inverted_dropout_mask(100, 1.0, &mut rng);
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn survivors_scaled_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Scalar> = (0..50).map(|i| i as Scalar).collect();
        let keep = 0.6;
        let mask = inverted_dropout_mask(50, keep, &mut rng);
        let y = apply_mask(&x, &mask);
        for (i, (&m, &v)) in mask.iter().zip(&y).enumerate() {
            if m != 0.0 {
                assert_eq!(v, x[i] / keep as Scalar);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn expectation_preserved() {
        // Monte Carlo: mean of the masked value over many trials ≈ x
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = 3.0 as Scalar;
        let trials = 100_000;
        let mut sum = 0.0;
        for _ in 0..trials {
            let mask = inverted_dropout_mask(1, 0.7, &mut rng);
            sum += x * mask[0];
        }
        let mean = sum / trials as Scalar;
        assert!(
            ((mean - x) / x).abs() < 0.01,
            "empirical mean {mean} too far from {x}"
        );
    }

    #[test]
    fn variational_mask_is_reusable_and_independent_across_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m1 = variational_mask(64, 0.5, &mut rng);
        // reuse across time steps is by construction: same vector
        let m1_again = m1.clone();
        assert_eq!(m1, m1_again);
        let m2 = variational_mask(64, 0.5, &mut rng);
        assert_ne!(m1, m2, "distinct sequences should draw distinct masks");
    }
}
