//! Recurrent cells (LSTM, GRU) and the pointwise convolution used by the
//! CNN baselines, each with an explicit backward pass.
//!
//! The LSTM uses the standard un-squashed cell update
//! `c_t = f .* c_{t-1} + i .* c~_t`; wrapping that sum in another sigmoid
//! would break the cell-state identity the gate structure relies on.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use crate::nn::{xavier_matrix, zeros_vector};
use crate::scalar::Scalar;

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn outer_add<T: Scalar>(acc: &mut Array2<T>, a: &Array1<T>, b: &Array1<T>) {
    for (i, &ai) in a.iter().enumerate() {
        let mut row = acc.row_mut(i);
        for (j, &bj) in b.iter().enumerate() {
            row[j] = row[j] + ai * bj;
        }
    }
}

/// Visits every trainable scalar in a fixed canonical order; the flat
/// parameter vectors used by the optimizer and the checkpoints rely on it.
pub trait ParamVisit<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(T));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T));

    fn count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }
}

impl<T: Scalar> ParamVisit<T> for Array1<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.iter().for_each(|&v| f(v));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.iter_mut().for_each(f);
    }
}

impl<T: Scalar> ParamVisit<T> for Array2<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.iter().for_each(|&v| f(v));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.iter_mut().for_each(f);
    }
}

/// Standard gated LSTM cell, input dim `d_in`, hidden dim `d_h`.
#[derive(Debug, Clone)]
pub struct LstmCell<T> {
    pub w_xi: Array2<T>,
    pub w_hi: Array2<T>,
    pub b_i: Array1<T>,
    pub w_xf: Array2<T>,
    pub w_hf: Array2<T>,
    pub b_f: Array1<T>,
    pub w_xo: Array2<T>,
    pub w_ho: Array2<T>,
    pub b_o: Array1<T>,
    pub w_xc: Array2<T>,
    pub w_hc: Array2<T>,
    pub b_c: Array1<T>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    pub x: Array1<T>,
    pub h_prev: Array1<T>,
    pub c_prev: Array1<T>,
    pub gate_i: Array1<T>,
    pub gate_f: Array1<T>,
    pub gate_o: Array1<T>,
    pub candidate: Array1<T>,
    pub c: Array1<T>,
    pub tanh_c: Array1<T>,
}

impl<T: Scalar> LstmCell<T> {
    pub fn new(rng: &mut ChaCha8Rng, d_in: usize, d_h: usize) -> Self {
        Self {
            w_xi: xavier_matrix(rng, d_in, d_h),
            w_hi: xavier_matrix(rng, d_h, d_h),
            b_i: zeros_vector(d_h),
            w_xf: xavier_matrix(rng, d_in, d_h),
            w_hf: xavier_matrix(rng, d_h, d_h),
            b_f: zeros_vector(d_h),
            w_xo: xavier_matrix(rng, d_in, d_h),
            w_ho: xavier_matrix(rng, d_h, d_h),
            b_o: zeros_vector(d_h),
            w_xc: xavier_matrix(rng, d_in, d_h),
            w_hc: xavier_matrix(rng, d_h, d_h),
            b_c: zeros_vector(d_h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z2 = |m: &Array2<T>| Array2::from_elem(m.dim(), T::zero());
        let z1 = |v: &Array1<T>| Array1::from_elem(v.len(), T::zero());
        Self {
            w_xi: z2(&self.w_xi),
            w_hi: z2(&self.w_hi),
            b_i: z1(&self.b_i),
            w_xf: z2(&self.w_xf),
            w_hf: z2(&self.w_hf),
            b_f: z1(&self.b_f),
            w_xo: z2(&self.w_xo),
            w_ho: z2(&self.w_ho),
            b_o: z1(&self.b_o),
            w_xc: z2(&self.w_xc),
            w_hc: z2(&self.w_hc),
            b_c: z1(&self.b_c),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_i.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.dim().0
    }

    /// One gated update. Gate activations are logistic sigmoids, the
    /// candidate is tanh, and `h = o .* tanh(c)` stays inside (-1, 1).
    pub fn step(
        &self,
        x: &Array1<T>,
        h_prev: &Array1<T>,
        c_prev: &Array1<T>,
    ) -> (Array1<T>, Array1<T>, LstmStepCache<T>) {
        assert_eq!(x.len(), self.input_dim(), "lstm input dim mismatch");
        assert_eq!(h_prev.len(), self.hidden_dim(), "lstm hidden dim mismatch");
        let gate_i = (x.dot(&self.w_xi) + h_prev.dot(&self.w_hi) + &self.b_i).mapv(sigmoid);
        let gate_f = (x.dot(&self.w_xf) + h_prev.dot(&self.w_hf) + &self.b_f).mapv(sigmoid);
        let gate_o = (x.dot(&self.w_xo) + h_prev.dot(&self.w_ho) + &self.b_o).mapv(sigmoid);
        let candidate = (x.dot(&self.w_xc) + h_prev.dot(&self.w_hc) + &self.b_c).mapv(T::tanh);
        let c = &gate_f * c_prev + &gate_i * &candidate;
        let tanh_c = c.mapv(T::tanh);
        let h = &gate_o * &tanh_c;
        let cache = LstmStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            gate_i,
            gate_f,
            gate_o,
            candidate,
            c: c.clone(),
            tanh_c,
        };
        (h, c, cache)
    }

    /// Backward through one step; accumulates parameter gradients into
    /// `grads` (an LstmCell-shaped buffer) and returns (dx, dh_prev, dc_prev).
    pub fn backward_step(
        &self,
        cache: &LstmStepCache<T>,
        dh: &Array1<T>,
        dc_in: &Array1<T>,
        grads: &mut Self,
    ) -> (Array1<T>, Array1<T>, Array1<T>) {
        let one = T::one();
        let d_o = dh * &cache.tanh_c;
        let dz_o = &d_o * &cache.gate_o.mapv(|o| o * (one - o));
        let dc = dc_in + &(dh * &cache.gate_o * &cache.tanh_c.mapv(|t| one - t * t));
        let d_f = &dc * &cache.c_prev;
        let dz_f = &d_f * &cache.gate_f.mapv(|f| f * (one - f));
        let d_i = &dc * &cache.candidate;
        let dz_i = &d_i * &cache.gate_i.mapv(|i| i * (one - i));
        let d_g = &dc * &cache.gate_i;
        let dz_g = &d_g * &cache.candidate.mapv(|g| one - g * g);
        let dc_prev = &dc * &cache.gate_f;

        let dx = dz_i.dot(&self.w_xi.t())
            + dz_f.dot(&self.w_xf.t())
            + dz_o.dot(&self.w_xo.t())
            + dz_g.dot(&self.w_xc.t());
        let dh_prev = dz_i.dot(&self.w_hi.t())
            + dz_f.dot(&self.w_hf.t())
            + dz_o.dot(&self.w_ho.t())
            + dz_g.dot(&self.w_hc.t());

        outer_add(&mut grads.w_xi, &cache.x, &dz_i);
        outer_add(&mut grads.w_hi, &cache.h_prev, &dz_i);
        grads.b_i = &grads.b_i + &dz_i;
        outer_add(&mut grads.w_xf, &cache.x, &dz_f);
        outer_add(&mut grads.w_hf, &cache.h_prev, &dz_f);
        grads.b_f = &grads.b_f + &dz_f;
        outer_add(&mut grads.w_xo, &cache.x, &dz_o);
        outer_add(&mut grads.w_ho, &cache.h_prev, &dz_o);
        grads.b_o = &grads.b_o + &dz_o;
        outer_add(&mut grads.w_xc, &cache.x, &dz_g);
        outer_add(&mut grads.w_hc, &cache.h_prev, &dz_g);
        grads.b_c = &grads.b_c + &dz_g;

        (dx, dh_prev, dc_prev)
    }
}

impl<T: Scalar> ParamVisit<T> for LstmCell<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        for m in [
            &self.w_xi, &self.w_hi, &self.w_xf, &self.w_hf, &self.w_xo, &self.w_ho, &self.w_xc,
            &self.w_hc,
        ] {
            m.visit(f);
        }
        for v in [&self.b_i, &self.b_f, &self.b_o, &self.b_c] {
            v.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for m in [
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_xc,
            &mut self.w_hc,
        ] {
            m.visit_mut(f);
        }
        for v in [&mut self.b_i, &mut self.b_f, &mut self.b_o, &mut self.b_c] {
            v.visit_mut(f);
        }
    }
}

/// GRU cell: update gate z, reset gate r, candidate h~.
#[derive(Debug, Clone)]
pub struct GruCell<T> {
    pub w_xz: Array2<T>,
    pub w_hz: Array2<T>,
    pub b_z: Array1<T>,
    pub w_xr: Array2<T>,
    pub w_hr: Array2<T>,
    pub b_r: Array1<T>,
    pub w_xh: Array2<T>,
    pub w_hh: Array2<T>,
    pub b_h: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct GruStepCache<T> {
    pub x: Array1<T>,
    pub h_prev: Array1<T>,
    pub gate_z: Array1<T>,
    pub gate_r: Array1<T>,
    pub candidate: Array1<T>,
    pub reset_h: Array1<T>,
}

impl<T: Scalar> GruCell<T> {
    pub fn new(rng: &mut ChaCha8Rng, d_in: usize, d_h: usize) -> Self {
        Self {
            w_xz: xavier_matrix(rng, d_in, d_h),
            w_hz: xavier_matrix(rng, d_h, d_h),
            b_z: zeros_vector(d_h),
            w_xr: xavier_matrix(rng, d_in, d_h),
            w_hr: xavier_matrix(rng, d_h, d_h),
            b_r: zeros_vector(d_h),
            w_xh: xavier_matrix(rng, d_in, d_h),
            w_hh: xavier_matrix(rng, d_h, d_h),
            b_h: zeros_vector(d_h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z2 = |m: &Array2<T>| Array2::from_elem(m.dim(), T::zero());
        let z1 = |v: &Array1<T>| Array1::from_elem(v.len(), T::zero());
        Self {
            w_xz: z2(&self.w_xz),
            w_hz: z2(&self.w_hz),
            b_z: z1(&self.b_z),
            w_xr: z2(&self.w_xr),
            w_hr: z2(&self.w_hr),
            b_r: z1(&self.b_r),
            w_xh: z2(&self.w_xh),
            w_hh: z2(&self.w_hh),
            b_h: z1(&self.b_h),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_z.len()
    }

    pub fn step(&self, x: &Array1<T>, h_prev: &Array1<T>) -> (Array1<T>, GruStepCache<T>) {
        let gate_z = (x.dot(&self.w_xz) + h_prev.dot(&self.w_hz) + &self.b_z).mapv(sigmoid);
        let gate_r = (x.dot(&self.w_xr) + h_prev.dot(&self.w_hr) + &self.b_r).mapv(sigmoid);
        let reset_h = &gate_r * h_prev;
        let candidate = (x.dot(&self.w_xh) + reset_h.dot(&self.w_hh) + &self.b_h).mapv(T::tanh);
        let h = h_prev * &gate_z.mapv(|z| T::one() - z) + &gate_z * &candidate;
        let cache = GruStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            gate_z,
            gate_r,
            candidate,
            reset_h,
        };
        (h, cache)
    }

    pub fn backward_step(
        &self,
        cache: &GruStepCache<T>,
        dh: &Array1<T>,
        grads: &mut Self,
    ) -> (Array1<T>, Array1<T>) {
        let one = T::one();
        let d_z = dh * &(&cache.candidate - &cache.h_prev);
        let dz_z = &d_z * &cache.gate_z.mapv(|z| z * (one - z));
        let d_cand = dh * &cache.gate_z;
        let dz_h = &d_cand * &cache.candidate.mapv(|c| one - c * c);
        let mut dh_prev = dh * &cache.gate_z.mapv(|z| one - z);

        let d_reset_h = dz_h.dot(&self.w_hh.t());
        let d_r = &d_reset_h * &cache.h_prev;
        let dz_r = &d_r * &cache.gate_r.mapv(|r| r * (one - r));
        dh_prev = dh_prev + &d_reset_h * &cache.gate_r;
        dh_prev = dh_prev + dz_z.dot(&self.w_hz.t()) + dz_r.dot(&self.w_hr.t());

        let dx = dz_z.dot(&self.w_xz.t()) + dz_r.dot(&self.w_xr.t()) + dz_h.dot(&self.w_xh.t());

        outer_add(&mut grads.w_xz, &cache.x, &dz_z);
        outer_add(&mut grads.w_hz, &cache.h_prev, &dz_z);
        grads.b_z = &grads.b_z + &dz_z;
        outer_add(&mut grads.w_xr, &cache.x, &dz_r);
        outer_add(&mut grads.w_hr, &cache.h_prev, &dz_r);
        grads.b_r = &grads.b_r + &dz_r;
        outer_add(&mut grads.w_xh, &cache.x, &dz_h);
        outer_add(&mut grads.w_hh, &cache.reset_h, &dz_h);
        grads.b_h = &grads.b_h + &dz_h;

        (dx, dh_prev)
    }
}

impl<T: Scalar> ParamVisit<T> for GruCell<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        for m in [
            &self.w_xz, &self.w_hz, &self.w_xr, &self.w_hr, &self.w_xh, &self.w_hh,
        ] {
            m.visit(f);
        }
        for v in [&self.b_z, &self.b_r, &self.b_h] {
            v.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for m in [
            &mut self.w_xz,
            &mut self.w_hz,
            &mut self.w_xr,
            &mut self.w_hr,
            &mut self.w_xh,
            &mut self.w_hh,
        ] {
            m.visit_mut(f);
        }
        for v in [&mut self.b_z, &mut self.b_r, &mut self.b_h] {
            v.visit_mut(f);
        }
    }
}

/// Kernel-size-1 convolution with ReLU: a pointwise channel expansion
/// applied independently at every time step.
#[derive(Debug, Clone)]
pub struct Conv1x1<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct Conv1x1Cache<T> {
    pub x: Array1<T>,
    pub pre: Array1<T>,
}

impl<T: Scalar> Conv1x1<T> {
    pub fn new(rng: &mut ChaCha8Rng, d_in: usize, channels: usize) -> Self {
        Self {
            w: xavier_matrix(rng, d_in, channels),
            b: zeros_vector(channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::from_elem(self.w.dim(), T::zero()),
            b: Array1::from_elem(self.b.len(), T::zero()),
        }
    }

    pub fn forward(&self, x: &Array1<T>) -> (Array1<T>, Conv1x1Cache<T>) {
        let pre = x.dot(&self.w) + &self.b;
        let out = pre.mapv(|v| v.max(T::zero()));
        (
            out,
            Conv1x1Cache {
                x: x.clone(),
                pre,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &Conv1x1Cache<T>,
        d_out: &Array1<T>,
        grads: &mut Self,
    ) -> Array1<T> {
        let d_pre: Array1<T> = d_out
            .iter()
            .zip(cache.pre.iter())
            .map(|(&d, &p)| if p > T::zero() { d } else { T::zero() })
            .collect();
        outer_add(&mut grads.w, &cache.x, &d_pre);
        grads.b = &grads.b + &d_pre;
        d_pre.dot(&self.w.t())
    }
}

impl<T: Scalar> ParamVisit<T> for Conv1x1<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        self.w.visit(f);
        self.b.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        self.w.visit_mut(f);
        self.b.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use rand::SeedableRng;

    #[test]
    fn lstm_zero_weights_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cell: LstmCell<f64> = LstmCell::new(&mut rng, 1, 4);
        cell = cell.zeros_like(); // all weights and biases zero
        let (h, c, _) = cell.step(&arr1(&[3.7]), &Array1::zeros(4), &Array1::zeros(4));
        // Gates are sigmoid(0) = 0.5 but the candidate is tanh(0) = 0,
        // so both the cell and the hidden state stay exactly zero.
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_hidden_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell: LstmCell<f64> = LstmCell::new(&mut rng, 1, 8);
        let mut h = Array1::zeros(8);
        let mut c = Array1::zeros(8);
        for t in 0..50 {
            let x = arr1(&[(t as f64 * 17.3).sin() * 100.0]);
            let (h2, c2, _) = cell.step(&x, &h, &c);
            h = h2;
            c = c2;
            assert!(h.iter().all(|&v| v.abs() < 1.0));
        }
    }

    #[test]
    fn gru_state_bounded_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell: GruCell<f64> = GruCell::new(&mut rng, 1, 6);
        let x = arr1(&[2.0]);
        let h0 = Array1::zeros(6);
        let (h1, _) = cell.step(&x, &h0);
        let (h2, _) = cell.step(&x, &h0);
        assert_eq!(h1, h2);
        assert!(h1.iter().all(|&v| v.abs() < 1.0));
    }

    #[test]
    fn param_visit_count_matches_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell: LstmCell<f64> = LstmCell::new(&mut rng, 3, 8);
        // 4 gates x (3*8 + 8*8 + 8)
        assert_eq!(cell.count(), 4 * (24 + 64 + 8));
        let gru: GruCell<f64> = GruCell::new(&mut rng, 2, 5);
        assert_eq!(gru.count(), 3 * (10 + 25 + 5));
    }
}
