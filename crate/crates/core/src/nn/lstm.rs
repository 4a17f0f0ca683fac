use rand::Rng;

use crate::nn::init::{glorot_uniform, lstm_bias, orthogonal_stacked};
use crate::nn::store::{GradMap, ParameterStore};
use crate::nn::tensor::{axpy, matvec, matvec_t, outer_acc, Tensor};
use crate::Scalar;

fn sigmoid(x: Scalar) -> Scalar {
    1.0 / (1.0 + (-x).exp())
}

/// One direction of an LSTM layer. Parameters: `<name>.w` `[4H, D]`,
/// `<name>.u` `[4H, H]`, `<name>.b` `[4H]`, gate order i, f, o, g.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<Scalar>,
    hm_prev: Vec<Scalar>,
    c_prev: Vec<Scalar>,
    i: Vec<Scalar>,
    f: Vec<Scalar>,
    o: Vec<Scalar>,
    g: Vec<Scalar>,
    tc: Vec<Scalar>,
}

#[derive(Debug, Clone)]
pub struct LstmSeqCache {
    steps: Vec<LstmStepCache>,
    rec_mask: Option<Vec<Scalar>>,
}

impl LstmParams {
    pub fn new(name: &str, in_dim: usize, hidden: usize) -> Self {
        Self {
            name: name.to_string(),
            in_dim,
            hidden,
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) {
        store.define(
            &format!("{}.w", self.name),
            glorot_uniform(4 * self.hidden, self.in_dim, rng),
            true,
        );
        store.define(
            &format!("{}.u", self.name),
            orthogonal_stacked(4 * self.hidden, self.hidden, rng),
            true,
        );
        store.define(&format!("{}.b", self.name), lstm_bias(self.hidden), true);
    }

    /// One cell step from explicit previous state.
    pub fn step(
        &self,
        store: &ParameterStore,
        x: &[Scalar],
        h_prev: &[Scalar],
        c_prev: &[Scalar],
        rec_mask: Option<&[Scalar]>,
    ) -> (Vec<Scalar>, Vec<Scalar>, LstmStepCache) {
        let h = self.hidden;
        assert_eq!(x.len(), self.in_dim, "lstm {}: input dim", self.name);
        assert_eq!(h_prev.len(), h);
        assert_eq!(c_prev.len(), h);
        let w = store.value(&format!("{}.w", self.name));
        let u = store.value(&format!("{}.u", self.name));
        let b = store.value(&format!("{}.b", self.name));

        let hm_prev: Vec<Scalar> = match rec_mask {
            Some(m) => h_prev.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h_prev.to_vec(),
        };
        let mut pre = matvec(w, x);
        axpy(&mut pre, &matvec(u, &hm_prev));
        axpy(&mut pre, &b.values);

        let i: Vec<Scalar> = pre[0..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<Scalar> = pre[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let o: Vec<Scalar> = pre[2 * h..3 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<Scalar> = pre[3 * h..4 * h].iter().map(|&v| v.tanh()).collect();

        let c: Vec<Scalar> = (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tc: Vec<Scalar> = c.iter().map(|v| v.tanh()).collect();
        let h_t: Vec<Scalar> = (0..h).map(|j| o[j] * tc[j]).collect();

        let cache = LstmStepCache {
            x: x.to_vec(),
            hm_prev,
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            tc,
        };
        (h_t, c, cache)
    }

    /// Run over a sequence from zero initial state. The recurrent dropout
    /// mask, when given, is applied to h_prev at every step.
    pub fn run(
        &self,
        store: &ParameterStore,
        xs: &[Vec<Scalar>],
        rec_mask: Option<&[Scalar]>,
    ) -> (Vec<Vec<Scalar>>, LstmSeqCache) {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut hs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (h_t, c_t, cache) = self.step(store, x, &h, &c, rec_mask);
            hs.push(h_t.clone());
            steps.push(cache);
            h = h_t;
            c = c_t;
        }
        (
            hs,
            LstmSeqCache {
                steps,
                rec_mask: rec_mask.map(|m| m.to_vec()),
            },
        )
    }

    /// BPTT: accumulates weight gradients, returns per-step input grads.
    pub fn backward(
        &self,
        values: &std::collections::BTreeMap<String, Tensor>,
        grads: &mut GradMap,
        cache: &LstmSeqCache,
        dhs: &[Vec<Scalar>],
    ) -> Vec<Vec<Scalar>> {
        let h = self.hidden;
        let w = &values[&format!("{}.w", self.name)];
        let u = &values[&format!("{}.u", self.name)];
        let n = cache.steps.len();
        assert_eq!(dhs.len(), n);

        let mut dxs = vec![Vec::new(); n];
        let mut dh_carry = vec![0.0; h];
        let mut dc_carry = vec![0.0; h];
        let mut gw = Tensor::zeros(&w.shape);
        let mut gu = Tensor::zeros(&u.shape);
        let mut gb = vec![0.0; 4 * h];

        for t in (0..n).rev() {
            let s = &cache.steps[t];
            let dh: Vec<Scalar> = dhs[t].iter().zip(&dh_carry).map(|(a, b)| a + b).collect();
            let mut da = vec![0.0; 4 * h];
            let mut dc_prev = vec![0.0; h];
            for j in 0..h {
                let do_j = dh[j] * s.tc[j];
                let dc_j = dc_carry[j] + dh[j] * s.o[j] * (1.0 - s.tc[j] * s.tc[j]);
                let di_j = dc_j * s.g[j];
                let dg_j = dc_j * s.i[j];
                let df_j = dc_j * s.c_prev[j];
                dc_prev[j] = dc_j * s.f[j];
                da[j] = di_j * s.i[j] * (1.0 - s.i[j]);
                da[h + j] = df_j * s.f[j] * (1.0 - s.f[j]);
                da[2 * h + j] = do_j * s.o[j] * (1.0 - s.o[j]);
                da[3 * h + j] = dg_j * (1.0 - s.g[j] * s.g[j]);
            }
            outer_acc(&mut gw, &da, &s.x);
            outer_acc(&mut gu, &da, &s.hm_prev);
            axpy(&mut gb, &da);
            dxs[t] = matvec_t(w, &da);
            let mut dhm = matvec_t(u, &da);
            if let Some(m) = &cache.rec_mask {
                for (v, mm) in dhm.iter_mut().zip(m) {
                    *v *= mm;
                }
            }
            dh_carry = dhm;
            dc_carry = dc_prev;
        }

        axpy(&mut grads.get_mut(&format!("{}.w", self.name)).unwrap().values, &gw.values);
        axpy(&mut grads.get_mut(&format!("{}.u", self.name)).unwrap().values, &gu.values);
        axpy(&mut grads.get_mut(&format!("{}.b", self.name)).unwrap().values, &gb);
        dxs
    }
}

/// Bidirectional LSTM layer; forward and backward outputs are summed, so
/// the output width equals the (shared) hidden size.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmSeqCache,
    bwd: LstmSeqCache,
}

impl BiLstm {
    pub fn new(name: &str, in_dim: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmParams::new(&format!("{name}.fwd"), in_dim, hidden),
            bwd: LstmParams::new(&format!("{name}.bwd"), in_dim, hidden),
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) {
        self.fwd.init(store, rng);
        self.bwd.init(store, rng);
    }

    pub fn run(
        &self,
        store: &ParameterStore,
        xs: &[Vec<Scalar>],
        rec_mask_fwd: Option<&[Scalar]>,
        rec_mask_bwd: Option<&[Scalar]>,
    ) -> (Vec<Vec<Scalar>>, BiLstmCache) {
        let (hf, fwd_cache) = self.fwd.run(store, xs, rec_mask_fwd);
        let rev: Vec<Vec<Scalar>> = xs.iter().rev().cloned().collect();
        let (hb_rev, bwd_cache) = self.bwd.run(store, &rev, rec_mask_bwd);
        let n = xs.len();
        let ys: Vec<Vec<Scalar>> = (0..n)
            .map(|t| {
                hf[t]
                    .iter()
                    .zip(&hb_rev[n - 1 - t])
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        (
            ys,
            BiLstmCache {
                fwd: fwd_cache,
                bwd: bwd_cache,
            },
        )
    }

    pub fn backward(
        &self,
        values: &std::collections::BTreeMap<String, Tensor>,
        grads: &mut GradMap,
        cache: &BiLstmCache,
        dys: &[Vec<Scalar>],
    ) -> Vec<Vec<Scalar>> {
        let n = dys.len();
        let dx_f = self.fwd.backward(values, grads, &cache.fwd, dys);
        let dys_rev: Vec<Vec<Scalar>> = dys.iter().rev().cloned().collect();
        let dx_b_rev = self.bwd.backward(values, grads, &cache.bwd, &dys_rev);
        (0..n)
            .map(|t| {
                dx_f[t]
                    .iter()
                    .zip(&dx_b_rev[n - 1 - t])
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(name: &str, in_dim: usize, hidden: usize, store: &mut ParameterStore) -> LstmParams {
        let cell = LstmParams::new(name, in_dim, hidden);
        store.define(&format!("{name}.w"), Tensor::zeros(&[4 * hidden, in_dim]), true);
        store.define(&format!("{name}.u"), Tensor::zeros(&[4 * hidden, hidden]), true);
        store.define(&format!("{name}.b"), Tensor::zeros(&[4 * hidden]), true);
        cell
    }

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let mut store = ParameterStore::new();
        let cell = zero_cell("l", 2, 3, &mut store);
        let (h, c, _) = cell.step(&store, &[0.0, 0.0], &[0.0; 3], &[0.0; 3], None);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_carries_cell_state() {
        let mut store = ParameterStore::new();
        let cell = zero_cell("l", 1, 2, &mut store);
        // huge forget bias, input gate bias hugely negative
        {
            let b = store.value_mut("l.b");
            b.values[2] = 50.0; // f gate
            b.values[3] = 50.0;
            b.values[0] = -50.0; // i gate
            b.values[1] = -50.0;
        }
        let c_prev = vec![0.37, -0.9];
        let (_, c, _) = cell.step(&store, &[1.0], &[0.0; 2], &c_prev, None);
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let cell = LstmParams::new("l", 3, 4, );
        cell.init(&mut store, &mut rng);
        let xs: Vec<Vec<Scalar>> = (0..5)
            .map(|t| (0..3).map(|j| ((t * 3 + j) as Scalar * 0.37).sin()).collect())
            .collect();

        let loss = |s: &ParameterStore| -> Scalar {
            let (hs, _) = cell.run(s, &xs, None);
            hs.iter().flatten().map(|v| v * v).sum::<Scalar>() * 0.5
        };

        store.zero_grads();
        let (hs, cache) = cell.run(&store, &xs, None);
        let dhs: Vec<Vec<Scalar>> = hs.clone();
        {
            let (values, grads) = store.split_mut();
            cell.backward(values, grads, &cache, &dhs);
        }
        for name in ["l.w", "l.u", "l.b"] {
            let numeric = central_diff(&mut store, name, loss, 1e-5);
            let err = max_rel_error(&store.grad(name).values, &numeric);
            assert!(err < 1e-4, "{name}: rel error {err}");
        }
    }

    #[test]
    fn bilstm_zero_params_zero_output() {
        let mut store = ParameterStore::new();
        let layer = BiLstm {
            fwd: zero_cell("b.fwd", 2, 3, &mut store),
            bwd: zero_cell("b.bwd", 2, 3, &mut store),
        };
        let xs = vec![vec![1.0, -1.0], vec![0.5, 0.5]];
        let (ys, _) = layer.run(&store, &xs, None, None);
        assert!(ys.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn bilstm_length_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::new();
        let layer = BiLstm::new("b", 2, 3);
        layer.init(&mut store, &mut rng);
        let xs = vec![vec![0.4, -0.2]];
        let (ys, _) = layer.run(&store, &xs, None, None);
        let (hf, _) = layer.fwd.run(&store, &xs, None);
        let (hb, _) = layer.bwd.run(&store, &xs, None);
        for j in 0..3 {
            assert!((ys[0][j] - (hf[0][j] + hb[0][j])).abs() < 1e-12);
        }
    }

    #[test]
    fn bilstm_palindrome_with_tied_directions() {
        // tie fwd and bwd weights by copying; palindromic input must give
        // a palindromic output sequence
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParameterStore::new();
        let layer = BiLstm::new("b", 2, 3);
        layer.fwd.init(&mut store, &mut rng);
        for part in ["w", "u", "b"] {
            let t = store.value(&format!("b.fwd.{part}")).clone();
            store.define(&format!("b.bwd.{part}"), t, true);
        }
        let a = vec![0.3, -0.6];
        let b = vec![0.9, 0.1];
        let xs = vec![a.clone(), b.clone(), a.clone()];
        let (ys, _) = layer.run(&store, &xs, None, None);
        for j in 0..3 {
            assert!(
                (ys[0][j] - ys[2][j]).abs() < 1e-12,
                "palindrome symmetry broken at {j}"
            );
        }
    }
}
