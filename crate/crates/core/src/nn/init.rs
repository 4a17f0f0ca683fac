use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::tensor::Tensor;
use crate::Scalar;

pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let uni = Uniform::new_inclusive(-bound, bound);
    let values = (0..rows * cols)
        .map(|_| uni.sample(rng) as Scalar)
        .collect();
    Tensor::from_vec(&[rows, cols], values)
}

/// Square orthogonal matrix via modified Gram-Schmidt on a Gaussian draw.
fn orthogonal_square<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            for k in 0..n {
                cols[i][k] -= dot * cols[j][k];
            }
        }
        let norm: f64 = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-12, "degenerate draw in orthogonal init");
        for x in cols[i].iter_mut() {
            *x /= norm;
        }
    }
    // cols are orthonormal columns; emit row-major
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = cols[c][r];
        }
    }
    out
}

/// Recurrent weight init: a stack of independent square orthogonal blocks,
/// one per gate. `rows` must be a multiple of `cols`.
pub fn orthogonal_stacked<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    assert!(rows % cols == 0, "orthogonal init needs stacked square blocks");
    let mut values: Vec<Scalar> = Vec::with_capacity(rows * cols);
    for _ in 0..rows / cols {
        values.extend(orthogonal_square(cols, rng).into_iter().map(|x| x as Scalar));
    }
    Tensor::from_vec(&[rows, cols], values)
}

/// LSTM bias: zeros, forget-gate section set to 1.0 (gate order i,f,o,g).
pub fn lstm_bias(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * hidden]);
    for i in hidden..2 * hidden {
        b.values[i] = 1.0;
    }
    b
}
