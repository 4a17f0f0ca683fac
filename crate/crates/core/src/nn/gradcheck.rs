//! Central finite-difference harness used by the gradient test suites.
//! Lives in the library so integration tests and the acceptance suite can
//! share it; the implementation path it checks never calls into here.

use crate::nn::store::ParameterStore;
use crate::Scalar;

/// Numerically differentiate `loss` with respect to every entry of the
/// named parameter using central differences with step `h`.
pub fn central_diff<F>(
    store: &mut ParameterStore,
    name: &str,
    loss: F,
    h: Scalar,
) -> Vec<Scalar>
where
    F: Fn(&ParameterStore) -> Scalar,
{
    let n = store.value(name).numel();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let orig = store.value(name).values[j];
        store.value_mut(name).values[j] = orig + h;
        let plus = loss(store);
        store.value_mut(name).values[j] = orig - h;
        let minus = loss(store);
        store.value_mut(name).values[j] = orig;
        out[j] = (plus - minus) / (2.0 * h);
    }
    out
}

/// Max over entries of |a - n| / max(|a|, |n|, 1). The floor of 1 keeps
/// finite-difference noise on near-zero gradients from dominating while
/// still flagging absolute errors above the tolerance.
pub fn max_rel_error(analytic: &[Scalar], numeric: &[Scalar]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs()).max(1.0);
            ((a - n).abs() / denom) as f64
        })
        .fold(0.0, f64::max)
}
