//! The next-focus ranker.
//!
//! The anchor and candidate embeddings form a two-token sequence. One
//! single-head scaled dot-product self-attention layer (projections to `h`
//! dimensions, no residual, no normalization) is mean-pooled over the two
//! tokens, and a linear head maps the pooled vector to one logit.

mod adam;
mod checkpoint;
mod grad;
mod loss;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use grad::{batch_gradient, gradcheck, Example, GradCheckReport};
pub use loss::{batch_loss, bce_with_logits, loss, loss_and_dz, loss_terms, LossConfig, LossTerms};
pub use train::{accuracy, grid_search, mean_loss, train, EpochMetrics, GridConfig, GridPoint, Sample, TrainConfig};

use crate::error::{Error, Result};
use crate::scalar::{dot, sigmoid, Scalar};

/// Learned weights. Projection matrices are `d × h`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RankerParams<T> {
    pub d: usize,
    pub h: usize,
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
    pub w_out: Vec<T>,
    pub b_out: T,
}

impl<T: Scalar> RankerParams<T> {
    pub fn zeros(d: usize, h: usize) -> Self {
        RankerParams {
            d,
            h,
            wq: vec![T::zero(); d * h],
            wk: vec![T::zero(); d * h],
            wv: vec![T::zero(); d * h],
            w_out: vec![T::zero(); h],
            b_out: T::zero(),
        }
    }

    /// Projections uniform in `±init_scale / √d`; output head zero.
    pub fn init(d: usize, h: usize, init_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = init_scale / (d as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> {
            (0..n)
                .map(|_| T::of(rng.gen_range(-1.0..=1.0) * bound))
                .collect()
        };
        let wq = draw(d * h);
        let wk = draw(d * h);
        let wv = draw(d * h);
        RankerParams {
            wq,
            wk,
            wv,
            ..RankerParams::zeros(d, h)
        }
    }

    pub fn param_count(&self) -> usize {
        3 * self.d * self.h + self.h + 1
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite())) && self.b_out.is_finite()
    }

    fn slices(&self) -> [&[T]; 4] {
        [&self.wq, &self.wk, &self.wv, &self.w_out]
    }

    /// Flattened view: `wq, wk, wv, w_out, b_out`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v: Vec<T> = self.slices().concat();
        v.push(self.b_out);
        v
    }

    pub fn from_flat(d: usize, h: usize, flat: &[T]) -> Result<Self> {
        let n = 3 * d * h + h + 1;
        if flat.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: flat.len(),
            });
        }
        let m = d * h;
        Ok(RankerParams {
            d,
            h,
            wq: flat[..m].to_vec(),
            wk: flat[m..2 * m].to_vec(),
            wv: flat[2 * m..3 * m].to_vec(),
            w_out: flat[3 * m..3 * m + h].to_vec(),
            b_out: flat[n - 1],
        })
    }

    /// Applies `f(param, other)` elementwise over every parameter.
    pub(crate) fn zip_mut(&mut self, other: &Self, mut f: impl FnMut(&mut T, T)) {
        for (a, b) in [
            (&mut self.wq, &other.wq),
            (&mut self.wk, &other.wk),
            (&mut self.wv, &other.wv),
            (&mut self.w_out, &other.w_out),
        ] {
            a.iter_mut().zip(b).for_each(|(x, &y)| f(x, y));
        }
        f(&mut self.b_out, other.b_out);
    }

    pub fn cast<U: Scalar>(&self) -> RankerParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        RankerParams {
            d: self.d,
            h: self.h,
            wq: c(&self.wq),
            wk: c(&self.wk),
            wv: c(&self.wv),
            w_out: c(&self.w_out),
            b_out: U::of(self.b_out.as_f64()),
        }
    }

    fn check_dims(&self, anchor: &[T], cand: &[T]) -> Result<()> {
        for len in [anchor.len(), cand.len()] {
            if len != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: len,
                });
            }
        }
        Ok(())
    }

    /// Logit for an (anchor, candidate) pair.
    pub fn forward(&self, anchor: &[T], cand: &[T]) -> Result<T> {
        self.check_dims(anchor, cand)?;
        Ok(self.trace(anchor, cand).logit)
    }

    pub fn predict_proba(&self, anchor: &[T], cand: &[T]) -> Result<T> {
        Ok(sigmoid(self.forward(anchor, cand)?))
    }

    /// Row-stochastic 2×2 attention matrix for the pair.
    pub fn attention(&self, anchor: &[T], cand: &[T]) -> Result<[[T; 2]; 2]> {
        self.check_dims(anchor, cand)?;
        Ok(self.trace(anchor, cand).attn)
    }

    /// Forward pass keeping the intermediates needed by the backward pass.
    pub(crate) fn trace(&self, anchor: &[T], cand: &[T]) -> Trace<T> {
        let h = self.h;
        let x = [anchor, cand];
        let proj = |w: &[T]| -> [Vec<T>; 2] { [project(x[0], w, h), project(x[1], w, h)] };
        let q = proj(&self.wq);
        let k = proj(&self.wk);
        let v = proj(&self.wv);
        let scale = T::one() / T::of(h as f64).sqrt();
        let mut attn = [[T::zero(); 2]; 2];
        for r in 0..2 {
            let s0 = dot(&q[r], &k[0]) * scale;
            let s1 = dot(&q[r], &k[1]) * scale;
            let m = s0.max(s1);
            let (e0, e1) = ((s0 - m).exp(), (s1 - m).exp());
            attn[r] = [e0 / (e0 + e1), e1 / (e0 + e1)];
        }
        let half = T::of(0.5);
        // mean over rows of attn·V
        let c0 = (attn[0][0] + attn[1][0]) * half;
        let c1 = (attn[0][1] + attn[1][1]) * half;
        let pooled: Vec<T> = (0..h).map(|j| c0 * v[0][j] + c1 * v[1][j]).collect();
        let logit = dot(&self.w_out, &pooled) + self.b_out;
        Trace {
            q,
            k,
            v,
            attn,
            pooled,
            logit,
        }
    }
}

pub(crate) struct Trace<T> {
    pub q: [Vec<T>; 2],
    pub k: [Vec<T>; 2],
    pub v: [Vec<T>; 2],
    pub attn: [[T; 2]; 2],
    pub pooled: Vec<T>,
    pub logit: T,
}

/// `x · W` for a row vector `x` of length `d` and a row-major `d × h` matrix.
fn project<T: Scalar>(x: &[T], w: &[T], h: usize) -> Vec<T> {
    let mut out = vec![T::zero(); h];
    for (i, &xi) in x.iter().enumerate() {
        if xi.is_zero() {
            continue;
        }
        let row = &w[i * h..(i + 1) * h];
        out.iter_mut().zip(row).for_each(|(o, &wij)| *o += xi * wij);
    }
    out
}
