//! Mini-batch Adam training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::checkpoint::Checkpoint;
use super::grad::{batch_gradient, Example};
use super::loss::{loss, LossConfig};
use super::RankerParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub loss: LossConfig,
    /// Attention dimension.
    pub h: usize,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            early_stop_patience: 10,
            loss: LossConfig::default(),
            h: 64,
            init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.h == 0 || !(self.init_scale > 0.0) {
            return Err(Error::ConfigInvalid(
                "learning_rate, batch_size, h and init_scale must be positive".into(),
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::ConfigInvalid("early_stop_patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// A labeled pair whose embeddings live at the given rows of a vector table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub anchor: usize,
    pub candidate: usize,
    pub label: bool,
}

fn example<'a, T>(table: &'a [Vec<T>], s: &Sample) -> Example<'a, T> {
    Example {
        anchor: &table[s.anchor],
        candidate: &table[s.candidate],
        label: s.label,
    }
}

/// Mean loss of `p` over `set`.
pub fn mean_loss<T: Scalar>(p: &RankerParams<T>, table: &[Vec<T>], set: &[Sample], cfg: &LossConfig) -> f64 {
    let total: f64 = set
        .iter()
        .map(|s| {
            let z = p.trace(&table[s.anchor], &table[s.candidate]).logit;
            loss(z, s.label, cfg).as_f64()
        })
        .sum();
    total / set.len() as f64
}

/// Fraction of samples on the correct side of probability 0.5.
pub fn accuracy<T: Scalar>(p: &RankerParams<T>, table: &[Vec<T>], set: &[Sample]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let hits = set
        .iter()
        .filter(|s| (p.trace(&table[s.anchor], &table[s.candidate]).logit > T::zero()) == s.label)
        .count();
    hits as f64 / set.len() as f64
}

/// Trains from the seeded initialization and returns the parameters with the
/// lowest validation loss seen. Deterministic for a given configuration.
pub fn train<T: Scalar>(
    table: &[Vec<T>],
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    provider: &str,
) -> Result<Checkpoint<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() || table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = table[0].len();
    if let Some(bad) = table.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let mut params = RankerParams::init(d, cfg.h, cfg.init_scale, cfg.seed);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut opt = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate), d, cfg.h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut seen = 0.0;
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<'_, T>> =
                chunk.iter().map(|&i| example(table, &train_set[i])).collect();
            let (l, g) = batch_gradient(&params, &batch, &cfg.loss);
            epoch_loss += l.as_f64() * chunk.len() as f64;
            seen += chunk.len() as f64;
            opt.step(&mut params, &g);
        }
        let val_loss = mean_loss(&params, table, val_set, &cfg.loss);
        log::debug!("epoch {epoch}: train {:.6} val {val_loss:.6}", epoch_loss / seen);
        history.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / seen,
            val_loss,
        });
        if !params.is_finite() {
            log::warn!("parameters diverged at epoch {epoch}; keeping best checkpoint");
            break;
        }
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok(Checkpoint {
        params: best,
        train_config: cfg.clone(),
        provider: provider.to_owned(),
        history,
    })
}

/// Values to try per hyperparameter; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub learning_rate: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda_penalty: Vec<f64>,
    pub h: Vec<usize>,
}

impl GridConfig {
    pub fn is_empty(&self) -> bool {
        self.learning_rate.is_empty()
            && self.alpha.is_empty()
            && self.beta.is_empty()
            && self.lambda_penalty.is_empty()
            && self.h.is_empty()
    }

    /// Cartesian product over the axes, in axis order.
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        fn axis<V: Copy>(values: &[V], base: V) -> Vec<V> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &lr in &axis(&self.learning_rate, base.learning_rate) {
            for &alpha in &axis(&self.alpha, base.loss.alpha) {
                for &beta in &axis(&self.beta, base.loss.beta) {
                    for &lambda_penalty in &axis(&self.lambda_penalty, base.loss.lambda_penalty) {
                        for &h in &axis(&self.h, base.h) {
                            out.push(TrainConfig {
                                learning_rate: lr,
                                h,
                                loss: LossConfig { alpha, beta, lambda_penalty },
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: TrainConfig,
    /// Validation loss of the point's best parameters under the base loss.
    pub val_loss: f64,
}

/// Trains every grid point and keeps the one with the lowest validation
/// loss, measured under the base loss configuration so that points with
/// different loss settings are comparable. Ties keep the earlier point.
pub fn grid_search<T: Scalar>(
    table: &[Vec<T>],
    train_set: &[Sample],
    val_set: &[Sample],
    base: &TrainConfig,
    grid: &GridConfig,
    provider: &str,
) -> Result<(Checkpoint<T>, Vec<GridPoint>)> {
    let mut best: Option<(f64, Checkpoint<T>)> = None;
    let mut points = Vec::new();
    for cfg in grid.expand(base) {
        let ckpt = train(table, train_set, val_set, &cfg, provider)?;
        let val_loss = mean_loss(&ckpt.params, table, val_set, &base.loss);
        points.push(GridPoint { config: cfg, val_loss });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, ckpt));
        }
    }
    let (_, ckpt) = best.expect("grid has at least one point");
    Ok((ckpt, points))
}
