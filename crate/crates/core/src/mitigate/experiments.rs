use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::detect::{evaluate_mitigation, invalid_sets, InvalidClassDetector, MitigationReport, ThresholdDetector};
use super::threshold::{threshold_search, ThresholdResult};
use super::{augment, train_entropic, train_invalid_class, MitigationConfig, Strategy};
use crate::corpus::{split_holdout, Dataset, Example};
use crate::error::{Error, Result};
use crate::metrics;
use crate::providers::{EmbeddedProvider, Prediction, Provider};
use crate::toyclf::{self, fit_temperature, LossConfig, ToyModel, TrainConfig};
use crate::xform::{TransformEngine, TransformKind};

/// Share of the training set held out for tuning temperature and θ.
pub const TUNE_FRACTION: f64 = 0.2;

/// Training data, a tuning split for temperature and θ, and the evaluation
/// set on which every strategy is scored.
#[derive(Debug, Clone)]
pub struct MitigationData {
    pub train: Dataset,
    pub tune: Dataset,
    pub eval: Dataset,
}

impl MitigationData {
    /// Holds out [`TUNE_FRACTION`] of `train` for tuning.
    pub fn from_split(train: &Dataset, eval: Dataset, seed: u64) -> Result<Self> {
        let (train, tune) = split_holdout(train, TUNE_FRACTION, seed)?;
        Ok(MitigationData { train, tune, eval })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationRun {
    pub strategy: Strategy,
    pub report: MitigationReport,
    /// The unmodified baseline on the same held-out data, rejecting nothing.
    pub baseline: MitigationReport,
    /// The trained model at temperature 1, rejecting nothing; set for the
    /// threshold strategies, whose `report` uses the rescaled model.
    pub unscaled: Option<MitigationReport>,
    pub temperature: f64,
    pub threshold: Option<ThresholdResult>,
    pub entropy_weight: Option<f64>,
    pub n_augmented: usize,
    pub skipped: Vec<(TransformKind, String)>,
    #[serde(skip)]
    pub model: Option<ToyModel>,
}

fn labelled(examples: &[Example]) -> Result<Vec<usize>> {
    examples
        .iter()
        .map(|e| {
            e.gold_label
                .ok_or_else(|| Error::InvalidArgument(format!("example `{}` has no gold label", e.id)))
        })
        .collect()
}

fn applicable(kinds: &[TransformKind], ds: &Dataset) -> Vec<TransformKind> {
    kinds.iter().copied().filter(|k| k.applicable(ds.task_kind)).collect()
}

/// Temperature-scales `model` on `tune`, then picks θ on the tuning clean
/// and invalid sets.
fn calibrate_and_threshold(
    model: &mut ToyModel,
    tune: &[Example],
    tune_invalid: &[(TransformKind, Vec<Example>)],
    baseline_accuracy: f64,
    cfg: &MitigationConfig,
) -> Result<ThresholdResult> {
    model.set_temperature(fit_temperature(model, tune)?)?;
    let provider = EmbeddedProvider::new(model.clone());
    let clean = provider.predict_batch(tune)?;
    let gold = labelled(tune)?;
    let pooled: Vec<Example> = tune_invalid.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    if let Some(theta) = cfg.theta {
        let inv = provider.predict_batch(&pooled)?;
        return Ok(ThresholdResult {
            theta,
            clean_accuracy: super::clean_accuracy_at(&clean, &gold, theta),
            detection: if inv.is_empty() { 0.0 } else { super::detection_at(&inv, theta) },
            feasible: true,
        });
    }
    if pooled.is_empty() {
        return Err(Error::InsufficientData("no invalid tuning examples".into()));
    }
    let inv = provider.predict_batch(&pooled)?;
    threshold_search(&clean, &gold, &inv, baseline_accuracy, cfg)
}

/// Trains one mitigation strategy from `baseline` and scores it, and the
/// baseline itself, on `data.eval`. Threshold strategies fit temperature
/// and θ on `data.tune`. Invalid evaluation inputs cover every applicable
/// kind in `eval_kinds`.
pub fn run_strategy(
    baseline: &ToyModel,
    data: &MitigationData,
    engine: &TransformEngine<'_>,
    cfg: &MitigationConfig,
    eval_kinds: &[TransformKind],
    train_cfg: &TrainConfig,
) -> Result<MitigationRun> {
    let train = &data.train;
    let tune = &data.tune;
    let test = &data.eval;
    cfg.validate(train.labels.n_classes())?;
    let kinds = applicable(&cfg.transforms, train);
    let (tune_invalid, _) = invalid_sets(&tune.examples, &kinds, engine, cfg.seed)?;
    let (test_invalid, mut skipped) =
        invalid_sets(&test.examples, &applicable(eval_kinds, train), engine, cfg.seed)?;

    let base_provider = EmbeddedProvider::new(baseline.clone());
    let baseline_report = evaluate_mitigation(
        &ThresholdDetector {
            provider: &base_provider,
            theta: 0.0,
        },
        &test.examples,
        &test_invalid,
    )?;
    let base_tune = base_provider.predict_batch(&tune.examples)?;
    let baseline_accuracy = metrics::accuracy(&base_tune, &labelled(&tune.examples)?)?;

    let mut run = MitigationRun {
        strategy: cfg.strategy,
        report: baseline_report.clone(),
        baseline: baseline_report,
        unscaled: None,
        temperature: 1.0,
        threshold: None,
        entropy_weight: None,
        n_augmented: 0,
        skipped: Vec::new(),
        model: None,
    };
    let mut model = match cfg.strategy {
        Strategy::Threshold => baseline.clone(),
        Strategy::EntropicThreshold => {
            let aug = augment(train, cfg, engine)?;
            let invalid = aug.invalid_examples();
            run.n_augmented = invalid.len();
            run.entropy_weight = Some(cfg.entropy_weight);
            merge_skips(&mut skipped, aug.skipped);
            train_entropic(baseline, train, &invalid, cfg, train_cfg)?
        }
        Strategy::InvalidClass => {
            let aug = augment(train, cfg, engine)?;
            run.n_augmented = aug.invalid_flags.iter().filter(|&&f| f).count();
            merge_skips(&mut skipped, aug.skipped);
            train_invalid_class(&aug.dataset, baseline, cfg, train_cfg)?
        }
    };
    run.report = match cfg.strategy {
        Strategy::InvalidClass => {
            let provider = EmbeddedProvider::new(model.clone());
            evaluate_mitigation(
                &InvalidClassDetector {
                    provider: &provider,
                    invalid_index: model.n_classes() - 1,
                },
                &test.examples,
                &test_invalid,
            )?
        }
        _ => {
            let raw = EmbeddedProvider::new(model.clone());
            run.unscaled = Some(evaluate_mitigation(
                &ThresholdDetector {
                    provider: &raw,
                    theta: 0.0,
                },
                &test.examples,
                &test_invalid,
            )?);
            let th = calibrate_and_threshold(&mut model, &tune.examples, &tune_invalid, baseline_accuracy, cfg)?;
            run.threshold = Some(th);
            run.temperature = model.temperature();
            let provider = EmbeddedProvider::new(model.clone());
            evaluate_mitigation(
                &ThresholdDetector {
                    provider: &provider,
                    theta: th.theta,
                },
                &test.examples,
                &test_invalid,
            )?
        }
    };
    run.skipped = skipped;
    run.model = Some(model);
    Ok(run)
}

fn merge_skips(into: &mut Vec<(TransformKind, String)>, from: Vec<(TransformKind, String)>) {
    for s in from {
        if !into.iter().any(|(k, _)| *k == s.0) {
            into.push(s);
        }
    }
}

/// Detection rates (percent) of invalid-class detectors, one row per
/// training kind and one column per evaluation kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub kinds: Vec<TransformKind>,
    pub detection: Vec<Vec<f64>>,
    pub clean_accuracy: Vec<f64>,
}

impl TransferMatrix {
    fn mean_over(&self, keep: impl Fn(TransformKind, TransformKind) -> bool) -> Option<f64> {
        let mut vals = Vec::new();
        for (i, &a) in self.kinds.iter().enumerate() {
            for (j, &b) in self.kinds.iter().enumerate() {
                if i != j && a.changes_content() && b.changes_content() && keep(a, b) {
                    vals.push(self.detection[i][j]);
                }
            }
        }
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean off-diagonal detection between distinct content-changing kinds
    /// of the same family.
    pub fn within_family_mean(&self) -> Option<f64> {
        self.mean_over(|a, b| a.family() == b.family())
    }

    /// Mean detection between content-changing kinds of different families.
    pub fn cross_family_mean(&self) -> Option<f64> {
        self.mean_over(|a, b| a.family() != b.family())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("train\\eval");
        for k in &self.kinds {
            let _ = write!(out, ",{k}");
        }
        out.push_str(",clean_accuracy\n");
        for (i, k) in self.kinds.iter().enumerate() {
            let _ = write!(out, "{k}");
            for v in &self.detection[i] {
                let _ = write!(out, ",{v:.2}");
            }
            let _ = writeln!(out, ",{:.2}", self.clean_accuracy[i]);
        }
        out
    }
}

/// For each runnable kind, trains an invalid-class detector on that kind
/// alone and measures detection on every kind.
pub fn transfer_matrix(
    baseline: &ToyModel,
    train: &Dataset,
    val: &Dataset,
    engine: &TransformEngine<'_>,
    cfg: &MitigationConfig,
    train_cfg: &TrainConfig,
) -> Result<TransferMatrix> {
    let kinds = applicable(&cfg.transforms, train);
    let (sets, _) = invalid_sets(&val.examples, &kinds, engine, cfg.seed)?;
    let kinds: Vec<TransformKind> = sets.iter().map(|(k, _)| *k).collect();
    let mut detection = Vec::with_capacity(kinds.len());
    let mut clean_accuracy = Vec::with_capacity(kinds.len());
    for &k in &kinds {
        let single = MitigationConfig {
            strategy: Strategy::InvalidClass,
            transforms: vec![k],
            ..cfg.clone()
        };
        let aug = augment(train, &single, engine)?;
        let model = train_invalid_class(&aug.dataset, baseline, &single, train_cfg)?;
        let provider = EmbeddedProvider::new(model.clone());
        let report = evaluate_mitigation(
            &InvalidClassDetector {
                provider: &provider,
                invalid_index: model.n_classes() - 1,
            },
            &val.examples,
            &sets,
        )?;
        detection.push(report.per_transform.iter().map(|d| d.detected).collect());
        clean_accuracy.push(report.clean_accuracy);
    }
    Ok(TransferMatrix {
        kinds,
        detection,
        clean_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOnInvalid {
    pub transform: TransformKind,
    /// Clean-validation accuracy of a model trained on clean data.
    pub clean_trained_accuracy: f64,
    /// Clean-validation accuracy of a model trained only on transformed data.
    pub invalid_trained_accuracy: f64,
    pub n_train: usize,
    pub n_skipped: usize,
}

fn accuracy_of(model: &ToyModel, val: &Dataset) -> Result<f64> {
    let preds: Vec<Prediction> = EmbeddedProvider::new(model.clone()).predict_batch(&val.examples)?;
    metrics::accuracy(&preds, &labelled(&val.examples)?)
}

/// Trains one model on `train` and one from scratch on `train` passed
/// through `kind` with original labels, and scores both on clean `val`.
pub fn train_on_invalid_experiment(
    train: &Dataset,
    val: &Dataset,
    kind: TransformKind,
    engine: &TransformEngine<'_>,
    loss: &LossConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOnInvalid> {
    let spec = crate::xform::TransformSpec::new(kind, train.task_kind).with_seed(train_cfg.seed);
    let out = engine.apply_batch(&train.examples, &spec)?;
    let n_skipped = out.skipped.len();
    let transformed: Vec<Example> = out.transformed.into_iter().map(|t| t.example).collect();
    if transformed.is_empty() {
        return Err(Error::InsufficientData(format!("{kind} transformed no training examples")));
    }
    let n_train = transformed.len();
    let invalid_train = train.with_examples(transformed)?;
    let clean_model = toyclf::train(train, loss, train_cfg, None)?;
    let invalid_model = toyclf::train(&invalid_train, loss, train_cfg, None)?;
    Ok(TrainOnInvalid {
        transform: kind,
        clean_trained_accuracy: accuracy_of(&clean_model, val)?,
        invalid_trained_accuracy: accuracy_of(&invalid_model, val)?,
        n_train,
        n_skipped,
    })
}
