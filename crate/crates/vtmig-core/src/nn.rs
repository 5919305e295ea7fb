//! Small shared neural-network plumbing: parameter initialization, Adam,
//! softmax, and the central-finite-difference gradient oracle used by the
//! gradient-check tests.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Xavier-uniform matrix: U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
/// Samples are drawn in f64 so f32 and f64 models share an RNG stream.
pub fn xavier_matrix<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| T::of(rng.gen_range(-s..s)))
}

pub fn zeros_vector<T: Scalar>(len: usize) -> Array1<T> {
    Array1::from_elem(len, T::zero())
}

/// Numerically stable softmax over a slice.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of a matrix, in place.
pub fn softmax_rows<T: Scalar>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), |a, b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.iter().copied().sum::<T>();
        row.mapv_inplace(|e| e / sum);
    }
}

/// Backward pass of a row-wise softmax: given P = softmax(S) and dL/dP,
/// returns dL/dS. Row rule: dS = P .* (dP - rowsum(dP .* P)).
pub fn softmax_rows_backward<T: Scalar>(probs: &Array2<T>, d_probs: &Array2<T>) -> Array2<T> {
    let mut out = Array2::from_elem(probs.dim(), T::zero());
    for ((mut o, p), dp) in out
        .rows_mut()
        .into_iter()
        .zip(probs.rows())
        .zip(d_probs.rows())
    {
        let dot: T = p.iter().zip(dp.iter()).map(|(&a, &b)| a * b).sum();
        for ((oi, &pi), &dpi) in o.iter_mut().zip(p.iter()).zip(dp.iter()) {
            *oi = pi * (dpi - dot);
        }
    }
    out
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "adam parameter count mismatch");
        assert_eq!(params.len(), grads.len(), "adam gradient count mismatch");
        self.t += 1;
        let t = T::of(self.t as f64);
        let bias1 = T::one() - self.beta1.powf(t);
        let bias2 = T::one() - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Central finite differences of a scalar function at `params`.
/// The independent oracle the analytic gradients are checked against.
pub fn finite_difference_gradient<T, F>(params: &[T], step: T, mut f: F) -> Vec<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    let two = T::of(2.0);
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = f(&work);
        work[i] = orig - step;
        let minus = f(&work);
        work[i] = orig;
        grad.push((plus - minus) / (two * step));
    }
    grad
}

/// Largest relative error between an analytic and a numeric gradient, with
/// an absolute floor so near-zero entries do not blow up the ratio.
pub fn max_relative_error<T: Scalar>(analytic: &[T], numeric: &[T]) -> T {
    assert_eq!(analytic.len(), numeric.len());
    let floor = T::of(1e-7);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(T::zero(), |acc, e| acc.max(e))
}
