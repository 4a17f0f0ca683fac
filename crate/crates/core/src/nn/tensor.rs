use crate::Scalar;

/// Dense row-major tensor. Matrices are `[rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<Scalar>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<Scalar>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            shape: shape.to_vec(),
            values,
        }
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn fill(&mut self, v: Scalar) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Euclidean norm, used in loss-abort diagnostics.
    pub fn norm(&self) -> Scalar {
        self.values.iter().map(|x| x * x).sum::<Scalar>().sqrt()
    }
}

/// y = W x for W `[m, n]`, x `[n]`.
pub fn matvec(w: &Tensor, x: &[Scalar]) -> Vec<Scalar> {
    let (m, n) = (w.rows(), w.cols());
    assert_eq!(x.len(), n, "matvec dimension mismatch");
    let mut y = vec![0.0; m];
    for r in 0..m {
        let row = &w.values[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for c in 0..n {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
    y
}

/// x = Wᵀ y for W `[m, n]`, y `[m]`.
pub fn matvec_t(w: &Tensor, y: &[Scalar]) -> Vec<Scalar> {
    let (m, n) = (w.rows(), w.cols());
    assert_eq!(y.len(), m, "matvec_t dimension mismatch");
    let mut x = vec![0.0; n];
    for r in 0..m {
        let row = &w.values[r * n..(r + 1) * n];
        let yr = y[r];
        for c in 0..n {
            x[c] += row[c] * yr;
        }
    }
    x
}

/// gw += dy xᵀ (outer product accumulation into a `[m, n]` gradient).
pub fn outer_acc(gw: &mut Tensor, dy: &[Scalar], x: &[Scalar]) {
    let (m, n) = (gw.rows(), gw.cols());
    assert_eq!(dy.len(), m);
    assert_eq!(x.len(), n);
    for r in 0..m {
        let row = &mut gw.values[r * n..(r + 1) * n];
        let d = dy[r];
        for c in 0..n {
            row[c] += d * x[c];
        }
    }
}

pub fn axpy(acc: &mut [Scalar], x: &[Scalar]) {
    assert_eq!(acc.len(), x.len());
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn hadamard(a: &[Scalar], b: &[Scalar]) -> Vec<Scalar> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
