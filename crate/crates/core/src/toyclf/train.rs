use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{grad, Batch, LossConfig};
use super::{softmax, Encoded, ToyModel, DEFAULT_DIM};
use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 0.5,
            seed: 0,
            dim: DEFAULT_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || self.dim == 0 {
            return Err(Error::InvalidArgument(
                "batch size, learning rate and dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn encode_labelled(model: &ToyModel, examples: &[Example]) -> Result<Vec<(Encoded, usize)>> {
    examples
        .iter()
        .filter_map(|e| e.gold_label.map(|y| (e, y)))
        .map(|(e, y)| Ok((model.encode(e)?, y)))
        .collect()
}

/// Mini-batch gradient descent; returns the final parameters.
///
/// A fresh model gets its vocabulary from `ds`. With `warm` the given
/// parameters (and vocabulary) are the starting point; zero epochs return
/// them unchanged.
pub fn train(
    ds: &Dataset,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    warm: Option<&ToyModel>,
) -> Result<ToyModel> {
    train_entropic_impl(ds, &[], loss_cfg, cfg, warm)
}

/// Continues training `warm` on `clean` while the entropic term acts on
/// `invalid`. `loss_cfg.kind` should be [`super::LossKind::Entropic`].
pub fn train_entropic(
    warm: &ToyModel,
    clean: &Dataset,
    invalid: &[Example],
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<ToyModel> {
    train_entropic_impl(clean, invalid, loss_cfg, cfg, Some(warm))
}

fn train_entropic_impl(
    ds: &Dataset,
    invalid: &[Example],
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    warm: Option<&ToyModel>,
) -> Result<ToyModel> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let mut model = match warm {
        Some(m) => {
            if m.n_classes() != ds.labels.n_classes() {
                return Err(Error::InvalidArgument(format!(
                    "warm model has {} classes, dataset {}",
                    m.n_classes(),
                    ds.labels.n_classes()
                )));
            }
            m.clone()
        }
        None => ToyModel::new(
            ds.vocabulary(),
            cfg.dim,
            ds.labels.n_classes(),
            ds.task_kind,
            cfg.seed,
        )?,
    };
    let clean = encode_labelled(&model, &ds.examples)?;
    let inv: Vec<Encoded> = invalid
        .iter()
        .map(|e| model.encode(e))
        .collect::<Result<_>>()?;
    if clean.is_empty() {
        return Err(Error::InvalidArgument("no labelled examples to train on".into()));
    }

    let steps_per_epoch = clean.len().div_ceil(cfg.batch_size);
    let inv_batch = if inv.is_empty() {
        0
    } else {
        inv.len().div_ceil(steps_per_epoch)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut inv_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x1dea));
    let mut clean_order: Vec<usize> = (0..clean.len()).collect();
    let mut inv_order: Vec<usize> = (0..inv.len()).collect();
    let mut step = 0;
    for _ in 0..cfg.epochs {
        clean_order.shuffle(&mut rng);
        inv_order.shuffle(&mut inv_rng);
        for b in 0..steps_per_epoch {
            let c_idx = &clean_order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(clean.len())];
            let c_batch: Vec<(Encoded, usize)> = c_idx.iter().map(|&i| clean[i].clone()).collect();
            let lo = (b * inv_batch).min(inv.len());
            let hi = ((b + 1) * inv_batch).min(inv.len());
            let i_batch: Vec<Encoded> = inv_order[lo..hi].iter().map(|&i| inv[i].clone()).collect();
            let g = grad(
                &model,
                &Batch {
                    clean: &c_batch,
                    invalid: &i_batch,
                },
                loss_cfg,
            )?;
            step += 1;
            if !g.loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("loss became {}", g.loss),
                });
            }
            let lr = cfg.learning_rate;
            for (w, d) in model.emb.iter_mut().zip(&g.emb) {
                *w -= lr * d;
            }
            for (w, d) in model.head.iter_mut().zip(&g.head) {
                *w -= lr * d;
            }
            for (w, d) in model.bias.iter_mut().zip(&g.bias) {
                *w -= lr * d;
            }
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if !(finite(&model.emb) && finite(&model.head) && finite(&model.bias)) {
                return Err(Error::Training {
                    step,
                    message: "parameters became non-finite".into(),
                });
            }
        }
    }
    Ok(model)
}

pub const TEMPERATURE_GRID_MIN: f64 = 0.25;
pub const TEMPERATURE_GRID_MAX: f64 = 5.0;
pub const TEMPERATURE_GRID_STEP: f64 = 0.01;

/// Mean negative log-likelihood of `labels` under `softmax(logits / t)`.
pub fn nll_at_temperature(logits: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| -softmax(z, t)[y].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / logits.len() as f64
}

/// Grid search over `T ∈ [0.25, 5.0]` in steps of 0.01 minimising NLL on
/// the labelled `calibration` examples. Ties go to the smaller `T`.
pub fn fit_temperature(model: &ToyModel, calibration: &[Example]) -> Result<f64> {
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    for ex in calibration {
        if let Some(y) = ex.gold_label {
            logits.push(model.logits(&model.encode(ex)?));
            labels.push(y);
        }
    }
    if logits.is_empty() {
        return Err(Error::InvalidArgument(
            "temperature fitting needs labelled examples".into(),
        ));
    }
    let steps = ((TEMPERATURE_GRID_MAX - TEMPERATURE_GRID_MIN) / TEMPERATURE_GRID_STEP).round() as usize;
    let mut best = (f64::INFINITY, 1.0);
    for k in 0..=steps {
        let t = ((TEMPERATURE_GRID_MIN + k as f64 * TEMPERATURE_GRID_STEP) * 100.0).round() / 100.0;
        let nll = nll_at_temperature(&logits, &labels, t);
        if nll < best.0 {
            best = (nll, t);
        }
    }
    Ok(best.1)
}
