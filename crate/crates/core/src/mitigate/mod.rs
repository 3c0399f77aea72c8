//! Mitigations for word-salad inputs (threshold rejection, entropic
//! training, an explicit invalid class) and the analysis experiments
//! built on them.

mod detect;
mod experiments;
mod threshold;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::toyclf::{self, EntropySign, LossConfig, LossKind, ToyModel, TrainConfig};
use crate::xform::{TransformEngine, TransformKind, TransformSpec};

pub use detect::{
    evaluate_mitigation, invalid_sets, Decision, Detector, InvalidClassDetector, MitigationReport,
    ThresholdDetector, TransformDetection,
};
pub use experiments::{
    run_strategy, train_on_invalid_experiment, transfer_matrix, MitigationData, MitigationRun,
    TrainOnInvalid, TransferMatrix, TUNE_FRACTION,
};
pub use threshold::{
    clean_accuracy_at, detection_at, threshold_grid, threshold_search, ThresholdResult,
    FEASIBILITY_EPSILON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Threshold,
    EntropicThreshold,
    InvalidClass,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Threshold => "threshold",
            Strategy::EntropicThreshold => "entropic-threshold",
            Strategy::InvalidClass => "invalid-class",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "threshold" => Ok(Strategy::Threshold),
            "entropic-threshold" | "entropic" => Ok(Strategy::EntropicThreshold),
            "invalid-class" => Ok(Strategy::InvalidClass),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        }
    }
}

pub const AUGMENT_PRESETS: [f64; 3] = [0.3, 0.4, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    pub strategy: Strategy,
    pub entropy_weight: f64,
    pub entropy_sign: EntropySign,
    pub theta: Option<f64>,
    pub augment_fraction: f64,
    pub transforms: Vec<TransformKind>,
    /// Allowed clean-accuracy drop, as a fraction (0.03 = 3 points).
    pub accuracy_tolerance: f64,
    pub grid_step: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            strategy: Strategy::InvalidClass,
            entropy_weight: 0.1,
            entropy_sign: EntropySign::Max,
            theta: None,
            augment_fraction: 0.5,
            transforms: TransformKind::ALL.to_vec(),
            accuracy_tolerance: 0.03,
            grid_step: 0.001,
            epochs: 3,
            seed: 0,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.augment_fraction > 0.0 && self.augment_fraction <= 1.0) {
            return bad(format!("augment_fraction {} outside (0, 1]", self.augment_fraction));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return bad(format!("entropy weight {} must be >= 0", self.entropy_weight));
        }
        if !(self.accuracy_tolerance >= 0.0 && self.accuracy_tolerance <= 1.0) {
            return bad(format!("accuracy tolerance {} outside [0, 1]", self.accuracy_tolerance));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return bad(format!("grid step {} outside (0, 1]", self.grid_step));
        }
        if let Some(t) = self.theta {
            if !(t >= 1.0 / n_classes as f64 && t <= 1.0) {
                return bad(format!("theta {t} outside [1/{n_classes}, 1]"));
            }
        }
        if self.transforms.is_empty() {
            return bad("no transforms configured".into());
        }
        Ok(())
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            seed: self.seed,
            ..*base
        }
    }
}

/// Clean training data followed by generated invalid examples.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub dataset: Dataset,
    /// Parallel to `dataset.examples`; true for generated invalid examples.
    pub invalid_flags: Vec<bool>,
    /// Transform kinds that could not run, with the reason.
    pub skipped: Vec<(TransformKind, String)>,
}

impl Augmented {
    pub fn invalid_examples(&self) -> Vec<Example> {
        self.dataset
            .examples
            .iter()
            .zip(&self.invalid_flags)
            .filter(|(_, &f)| f)
            .map(|(e, _)| e.clone())
            .collect()
    }

    pub fn clean_examples(&self) -> Vec<Example> {
        self.dataset
            .examples
            .iter()
            .zip(&self.invalid_flags)
            .filter(|(_, &f)| !f)
            .map(|(e, _)| e.clone())
            .collect()
    }
}

/// Seeded sample of `⌈fraction·n⌉` example indices, ascending.
pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Appends one invalid example per configured transform for each sampled
/// training example. Under the invalid-class strategy they are labelled
/// with a new last class; otherwise they carry no label.
pub fn augment(ds: &Dataset, cfg: &MitigationConfig, engine: &TransformEngine<'_>) -> Result<Augmented> {
    cfg.validate(ds.labels.n_classes())?;
    let applicable: Vec<TransformKind> = cfg
        .transforms
        .iter()
        .copied()
        .filter(|k| k.applicable(ds.task_kind))
        .collect();
    if applicable.is_empty() {
        return Err(Error::Config(format!(
            "none of the configured transforms apply to {:?} tasks",
            ds.task_kind
        )));
    }
    let (kinds, unavailable) = engine.partition_kinds(&applicable);
    let mut skipped: Vec<(TransformKind, String)> =
        unavailable.into_iter().map(|(k, e)| (k, e.to_string())).collect();
    for (k, reason) in &skipped {
        log::warn!("augmentation skips {k}: {reason}");
    }

    let sampled: Vec<Example> = sample_indices(ds.len(), cfg.augment_fraction, cfg.seed)
        .into_iter()
        .map(|i| ds.examples[i].clone())
        .collect();
    let (labels, invalid_label) = match cfg.strategy {
        Strategy::InvalidClass => {
            let l = ds.labels.with_invalid_class();
            let idx = l.n_classes() - 1;
            (l, Some(idx))
        }
        _ => (ds.labels.clone(), None),
    };

    let mut examples = ds.examples.clone();
    let mut flags = vec![false; examples.len()];
    for kind in kinds {
        let spec = TransformSpec::new(kind, ds.task_kind).with_seed(cfg.seed);
        let out = match engine.apply_batch(&sampled, &spec) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("augmentation skips {kind}: {e}");
                skipped.push((kind, e.to_string()));
                continue;
            }
        };
        if !out.skipped.is_empty() {
            log::debug!("{kind}: {} examples not transformable", out.skipped.len());
        }
        for t in out.transformed {
            let mut ex = t.example;
            ex.id = format!("{}#{}", t.source_id, kind);
            ex.gold_label = invalid_label;
            examples.push(ex);
            flags.push(true);
        }
    }
    let dataset = Dataset::new(examples, labels, ds.task_kind)?;
    Ok(Augmented {
        dataset,
        invalid_flags: flags,
        skipped,
    })
}

/// Continues training `warm` on `clean` while pushing up prediction
/// entropy on `invalid`.
pub fn train_entropic(
    warm: &ToyModel,
    clean: &Dataset,
    invalid: &[Example],
    cfg: &MitigationConfig,
    train_cfg: &TrainConfig,
) -> Result<ToyModel> {
    let loss = LossConfig {
        kind: LossKind::Entropic,
        entropy_weight: cfg.entropy_weight,
        entropy_sign: cfg.entropy_sign,
        ..LossConfig::default()
    };
    toyclf::train_entropic(warm, clean, invalid, &loss, &cfg.train_config(train_cfg))
}

/// Cross-entropy training over N+1 classes, warm-started from `base` with
/// a fresh invalid output.
pub fn train_invalid_class(
    augmented: &Dataset,
    base: &ToyModel,
    cfg: &MitigationConfig,
    train_cfg: &TrainConfig,
) -> Result<ToyModel> {
    if augmented.labels.n_classes() != base.n_classes() + 1 {
        return Err(Error::InvalidArgument(format!(
            "augmented set has {} classes, expected {}",
            augmented.labels.n_classes(),
            base.n_classes() + 1
        )));
    }
    let warm = base.with_extra_class();
    toyclf::train(
        augmented,
        &LossConfig::cross_entropy(),
        &cfg.train_config(train_cfg),
        Some(&warm),
    )
}
