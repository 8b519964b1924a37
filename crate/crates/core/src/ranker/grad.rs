//! Reverse-mode gradient of the mean batch loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, loss_and_dz, LossConfig};
use super::RankerParams;
use crate::scalar::{dot, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct Example<'a, T> {
    pub anchor: &'a [T],
    pub candidate: &'a [T],
    pub label: bool,
}

/// Mean loss over `batch` and its gradient, shaped like the parameters.
pub fn batch_gradient<T: Scalar>(
    p: &RankerParams<T>,
    batch: &[Example<'_, T>],
    cfg: &LossConfig,
) -> (T, RankerParams<T>) {
    let mut g = RankerParams::zeros(p.d, p.h);
    if batch.is_empty() {
        return (T::zero(), g);
    }
    let inv_n = T::one() / T::of(batch.len() as f64);
    let mut total = T::zero();
    for ex in batch {
        total += accumulate(p, ex, cfg, inv_n, &mut g);
    }
    (total * inv_n, g)
}

/// Adds `weight · ∂loss/∂θ` for one example into `g` and returns its loss.
fn accumulate<T: Scalar>(
    p: &RankerParams<T>,
    ex: &Example<'_, T>,
    cfg: &LossConfig,
    weight: T,
    g: &mut RankerParams<T>,
) -> T {
    let h = p.h;
    let t = p.trace(ex.anchor, ex.candidate);
    let (l, dz_raw) = loss_and_dz(t.logit, ex.label, cfg);
    let dz = dz_raw * weight;
    if dz.is_zero() {
        return l;
    }

    g.b_out += dz;
    g.w_out
        .iter_mut()
        .zip(&t.pooled)
        .for_each(|(gw, &pv)| *gw += dz * pv);

    // pooled = mean over rows of O = A·V, so dO_r = dz · w_out / 2 for both rows.
    let half = T::of(0.5);
    let d_out: Vec<T> = p.w_out.iter().map(|&w| dz * w * half).collect();

    let d_attn: [[T; 2]; 2] = [0, 1].map(|_| [dot(&d_out, &t.v[0]), dot(&d_out, &t.v[1])]);
    let col = [t.attn[0][0] + t.attn[1][0], t.attn[0][1] + t.attn[1][1]];
    let d_v: [Vec<T>; 2] = [0, 1].map(|j| d_out.iter().map(|&o| o * col[j]).collect());

    let mut d_score = [[T::zero(); 2]; 2];
    for r in 0..2 {
        let inner = t.attn[r][0] * d_attn[r][0] + t.attn[r][1] * d_attn[r][1];
        for j in 0..2 {
            d_score[r][j] = t.attn[r][j] * (d_attn[r][j] - inner);
        }
    }
    let scale = T::one() / T::of(h as f64).sqrt();
    let d_q: [Vec<T>; 2] = [0, 1].map(|r| {
        (0..h)
            .map(|c| (d_score[r][0] * t.k[0][c] + d_score[r][1] * t.k[1][c]) * scale)
            .collect()
    });
    let d_k: [Vec<T>; 2] = [0, 1].map(|j| {
        (0..h)
            .map(|c| (d_score[0][j] * t.q[0][c] + d_score[1][j] * t.q[1][c]) * scale)
            .collect()
    });

    let x = [ex.anchor, ex.candidate];
    for (gw, dy) in [(&mut g.wq, &d_q), (&mut g.wk, &d_k), (&mut g.wv, &d_v)] {
        for (tok, xs) in x.iter().enumerate() {
            for (i, &xi) in xs.iter().enumerate() {
                if xi.is_zero() {
                    continue;
                }
                gw[i * h..(i + 1) * h]
                    .iter_mut()
                    .zip(&dy[tok])
                    .for_each(|(gv, &d)| *gv += xi * d);
            }
        }
    }
    l
}

/// Outcome of [`gradcheck`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub configurations: usize,
    pub parameters_checked: usize,
    /// Largest `|fd - g| / max(|fd|, |g|, 1e-3)` seen.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn mean_batch_loss(p: &RankerParams<f64>, batch: &[Example<'_, f64>], cfg: &LossConfig) -> f64 {
    let zs: Vec<(f64, bool)> = batch
        .iter()
        .map(|e| (p.trace(e.anchor, e.candidate).logit, e.label))
        .collect();
    batch_loss(&zs, cfg)
}

/// Compares the analytic gradient with central finite differences on
/// `configurations` random problems (d ≤ 8, h ≤ 4, batch ≤ 16).
pub fn gradcheck(configurations: usize, seed: u64, cfg: &LossConfig, tolerance: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut worst = 0.0f64;
    let eps = 1e-5;
    for _ in 0..configurations {
        let (d, h, n) = (rng.gen_range(2..=8), rng.gen_range(1..=4), rng.gen_range(1..=16));
        let mut p = RankerParams::<f64>::init(d, h, 1.5, rng.gen());
        p.w_out.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        p.b_out = rng.gen_range(-0.5..0.5);
        let vs: Vec<Vec<f64>> = (0..2 * n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let batch: Vec<Example<'_, f64>> = (0..n)
            .map(|i| Example {
                anchor: &vs[2 * i],
                candidate: &vs[2 * i + 1],
                label: rng.gen_bool(0.5),
            })
            .collect();
        let (_, g) = batch_gradient(&p, &batch, cfg);
        let flat = p.to_flat();
        for (i, gi) in g.to_flat().into_iter().enumerate() {
            let at = |delta: f64| {
                let mut v = flat.clone();
                v[i] += delta;
                mean_batch_loss(&RankerParams::from_flat(d, h, &v).expect("same shape"), &batch, cfg)
            };
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            let rel = (fd - gi).abs() / fd.abs().max(gi.abs()).max(1e-3);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    GradCheckReport {
        configurations,
        parameters_checked: checked,
        max_rel_error: worst,
        tolerance,
        passed: worst <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn mean_loss(p: &RankerParams<f64>, batch: &[Example<'_, f64>], cfg: &LossConfig) -> f64 {
        let zs: Vec<(f64, bool)> = batch
            .iter()
            .map(|e| (p.forward(e.anchor, e.candidate).unwrap(), e.label))
            .collect();
        batch_loss(&zs, cfg)
    }

    #[test]
    fn bias_gradient_at_zero_point_is_mean_dz() {
        let p = RankerParams::<f64>::zeros(3, 2);
        let a = [0.5, -0.5, 1.0];
        let batch = [
            Example { anchor: &a, candidate: &a, label: true },
            Example { anchor: &a, candidate: &a, label: false },
        ];
        let cfg = LossConfig { alpha: 0.3, beta: 1.5, lambda_penalty: 2.0 };
        let (_, g) = batch_gradient(&p, &batch, &cfg);
        let expected = (loss_and_dz(0.0, true, &cfg).1 + loss_and_dz(0.0, false, &cfg).1) / 2.0;
        assert!((g.b_out - expected).abs() < 1e-15);
        assert!(g.wq.iter().all(|v| *v == 0.0), "zero head blocks projection gradients");
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = RankerParams::<f64>::init(4, 3, 1.0, 2);
        p.w_out = random_vec(&mut rng, 3);
        let vs: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, 4)).collect();
        let batch: Vec<Example<'_, f64>> = (0..3)
            .map(|i| Example { anchor: &vs[2 * i], candidate: &vs[2 * i + 1], label: i % 2 == 0 })
            .collect();
        let doubled: Vec<Example<'_, f64>> = batch.iter().chain(batch.iter()).copied().collect();
        let cfg = LossConfig::default();
        let (l1, g1) = batch_gradient(&p, &batch, &cfg);
        let (l2, g2) = batch_gradient(&p, &doubled, &cfg);
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradcheck_passes() {
        let r = gradcheck(5, 3, &LossConfig::default(), 1e-4);
        assert!(r.passed, "{r:?}");
        assert!(r.parameters_checked > 0);
    }

    #[test]
    fn matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let (d, h) = (3 + trial % 3, 2 + trial % 2);
            let mut p = RankerParams::<f64>::init(d, h, 1.5, trial as u64);
            p.w_out = random_vec(&mut rng, h);
            p.b_out = rng.gen_range(-0.5..0.5);
            let vs: Vec<Vec<f64>> = (0..8).map(|_| random_vec(&mut rng, d)).collect();
            let batch: Vec<Example<'_, f64>> = (0..4)
                .map(|i| Example { anchor: &vs[2 * i], candidate: &vs[2 * i + 1], label: rng.gen_bool(0.4) })
                .collect();
            let cfg = LossConfig { alpha: 0.4, beta: 1.7, lambda_penalty: 1.3 };
            let (_, g) = batch_gradient(&p, &batch, &cfg);
            let flat = p.to_flat();
            let eps = 1e-5;
            for (i, &gi) in g.to_flat().iter().enumerate() {
                let mut plus = flat.clone();
                plus[i] += eps;
                let mut minus = flat.clone();
                minus[i] -= eps;
                let fd = (mean_loss(&RankerParams::from_flat(d, h, &plus).unwrap(), &batch, &cfg)
                    - mean_loss(&RankerParams::from_flat(d, h, &minus).unwrap(), &batch, &cfg))
                    / (2.0 * eps);
                assert!((fd - gi).abs() <= 1e-6 * fd.abs().max(gi.abs()) + 1e-9, "param {i}: {fd} vs {gi}");
            }
        }
    }
}
