//! Scaled dot-product multi-head attention over a short sequence of
//! projection vectors, with explicit backward pass.
//!
//! Each head keeps the full projection width `d_k` (heads are not split
//! slices of the model dimension); the concatenated heads are mapped back
//! to `d_k` by the output matrix.

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use crate::nn::{softmax_rows, softmax_rows_backward, xavier_matrix};
use crate::scalar::Scalar;

use super::cells::ParamVisit;

#[derive(Debug, Clone)]
pub struct AttentionHead<T> {
    pub w_q: Array2<T>,
    pub w_k: Array2<T>,
    pub w_v: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T> {
    pub heads: Vec<AttentionHead<T>>,
    pub w_o: Array2<T>,
}

/// Per-head intermediates kept for the backward pass. `probs` rows are the
/// attention distributions; each sums to one.
#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    pub probs: Array2<T>,
    pub context: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pub input: Array2<T>,
    pub heads: Vec<HeadCache<T>>,
    pub concat: Array2<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new(rng: &mut ChaCha8Rng, n_heads: usize, d_k: usize) -> Self {
        let heads = (0..n_heads)
            .map(|_| AttentionHead {
                w_q: xavier_matrix(rng, d_k, d_k),
                w_k: xavier_matrix(rng, d_k, d_k),
                w_v: xavier_matrix(rng, d_k, d_k),
            })
            .collect();
        Self {
            heads,
            w_o: xavier_matrix(rng, n_heads * d_k, d_k),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Array2<T>| Array2::from_elem(m.dim(), T::zero());
        Self {
            heads: self
                .heads
                .iter()
                .map(|h| AttentionHead {
                    w_q: z(&h.w_q),
                    w_k: z(&h.w_k),
                    w_v: z(&h.w_v),
                })
                .collect(),
            w_o: z(&self.w_o),
        }
    }

    pub fn model_dim(&self) -> usize {
        self.w_o.dim().1
    }

    /// (seq_len, d_k) in, (seq_len, d_k) out.
    pub fn forward(&self, input: &Array2<T>) -> (Array2<T>, AttentionCache<T>) {
        let (seq_len, d_in) = input.dim();
        assert_eq!(d_in, self.model_dim(), "attention input dim mismatch");
        let d_k = self.model_dim();
        let scale = T::one() / T::of(d_k as f64).sqrt();

        let mut concat = Array2::from_elem((seq_len, self.heads.len() * d_k), T::zero());
        let mut head_caches = Vec::with_capacity(self.heads.len());
        for (idx, head) in self.heads.iter().enumerate() {
            let q = input.dot(&head.w_q);
            let k = input.dot(&head.w_k);
            let v = input.dot(&head.w_v);
            let mut scores = q.dot(&k.t());
            scores.mapv_inplace(|x| x * scale);
            softmax_rows(&mut scores);
            let context = scores.dot(&v);
            concat
                .slice_mut(s![.., idx * d_k..(idx + 1) * d_k])
                .assign(&context);
            head_caches.push(HeadCache {
                q,
                k,
                v,
                probs: scores,
                context,
            });
        }
        let output = concat.dot(&self.w_o);
        (
            output,
            AttentionCache {
                input: input.clone(),
                heads: head_caches,
                concat,
            },
        )
    }

    /// Backward pass; accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to the input sequence.
    pub fn backward(
        &self,
        cache: &AttentionCache<T>,
        d_output: &Array2<T>,
        grads: &mut Self,
    ) -> Array2<T> {
        let d_k = self.model_dim();
        let scale = T::one() / T::of(d_k as f64).sqrt();

        grads.w_o = &grads.w_o + &cache.concat.t().dot(d_output);
        let d_concat = d_output.dot(&self.w_o.t());

        let mut d_input = Array2::from_elem(cache.input.dim(), T::zero());
        for (idx, (head, hc)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let d_context = d_concat.slice(s![.., idx * d_k..(idx + 1) * d_k]).to_owned();
            let d_probs = d_context.dot(&hc.v.t());
            let d_v = hc.probs.t().dot(&d_context);
            let mut d_scores = softmax_rows_backward(&hc.probs, &d_probs);
            d_scores.mapv_inplace(|x| x * scale);
            let d_q = d_scores.dot(&hc.k);
            let d_kk = d_scores.t().dot(&hc.q);

            d_input = d_input
                + d_q.dot(&head.w_q.t())
                + d_kk.dot(&head.w_k.t())
                + d_v.dot(&head.w_v.t());
            let g = &mut grads.heads[idx];
            g.w_q = &g.w_q + &cache.input.t().dot(&d_q);
            g.w_k = &g.w_k + &cache.input.t().dot(&d_kk);
            g.w_v = &g.w_v + &cache.input.t().dot(&d_v);
        }
        d_input
    }
}

impl<T: Scalar> ParamVisit<T> for MultiHeadAttention<T> {
    fn visit(&self, f: &mut dyn FnMut(T)) {
        for h in &self.heads {
            h.w_q.visit(f);
            h.w_k.visit(f);
            h.w_v.visit(f);
        }
        self.w_o.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut T)) {
        for h in &mut self.heads {
            h.w_q.visit_mut(f);
            h.w_k.visit_mut(f);
            h.w_v.visit_mut(f);
        }
        self.w_o.visit_mut(f);
    }
}
