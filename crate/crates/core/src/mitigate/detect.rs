use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::providers::Provider;
use crate::xform::{TransformEngine, TransformKind, TransformSpec};

/// A classifier's verdict on one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub predicted: usize,
    pub confidence: f64,
    /// Rejected as invalid.
    pub flagged: bool,
}

pub trait Detector: Sync {
    fn decide(&self, inputs: &[Example]) -> Result<Vec<Decision>>;
}

/// Rejects inputs whose top probability falls below θ.
pub struct ThresholdDetector<'a> {
    pub provider: &'a dyn Provider,
    pub theta: f64,
}

impl Detector for ThresholdDetector<'_> {
    fn decide(&self, inputs: &[Example]) -> Result<Vec<Decision>> {
        Ok(self
            .provider
            .predict_batch(inputs)?
            .into_iter()
            .map(|p| Decision {
                predicted: p.predicted,
                confidence: p.confidence,
                flagged: p.confidence < self.theta,
            })
            .collect())
    }
}

/// Rejects inputs whose argmax is the dedicated invalid class.
pub struct InvalidClassDetector<'a> {
    pub provider: &'a dyn Provider,
    pub invalid_index: usize,
}

impl Detector for InvalidClassDetector<'_> {
    fn decide(&self, inputs: &[Example]) -> Result<Vec<Decision>> {
        Ok(self
            .provider
            .predict_batch(inputs)?
            .into_iter()
            .map(|p| Decision {
                predicted: p.predicted,
                confidence: p.confidence,
                flagged: p.predicted == self.invalid_index,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformDetection {
    pub transform: TransformKind,
    pub detected: f64,
    pub mean_confidence: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    /// Percent of clean examples accepted and correctly classified.
    pub clean_accuracy: f64,
    /// Percent of the pooled invalid examples rejected.
    pub invalid_detected: f64,
    pub per_transform: Vec<TransformDetection>,
    pub clean_mean_confidence: f64,
    pub invalid_mean_confidence: f64,
}

impl MitigationReport {
    /// Pooled detection over the listed kinds; `None` if none were evaluated.
    pub fn detection_over(&self, kinds: &[TransformKind]) -> Option<f64> {
        let rows: Vec<&TransformDetection> = self
            .per_transform
            .iter()
            .filter(|d| kinds.contains(&d.transform))
            .collect();
        let n: usize = rows.iter().map(|d| d.n).sum();
        (n > 0).then(|| rows.iter().map(|d| d.detected * d.n as f64).sum::<f64>() / n as f64)
    }

    /// Pooled mean confidence over the listed kinds.
    pub fn confidence_over(&self, kinds: &[TransformKind]) -> Option<f64> {
        let rows: Vec<&TransformDetection> = self
            .per_transform
            .iter()
            .filter(|d| kinds.contains(&d.transform))
            .collect();
        let n: usize = rows.iter().map(|d| d.n).sum();
        (n > 0).then(|| rows.iter().map(|d| d.mean_confidence * d.n as f64).sum::<f64>() / n as f64)
    }
}

/// Scores a detector on clean labelled inputs and per-transform invalid
/// sets. A rejected clean example counts as an error.
pub fn evaluate_mitigation(
    detector: &dyn Detector,
    clean: &[Example],
    invalid: &[(TransformKind, Vec<Example>)],
) -> Result<MitigationReport> {
    if clean.is_empty() {
        return Err(Error::InvalidArgument("no clean examples to evaluate".into()));
    }
    let decisions = detector.decide(clean)?;
    let mut correct = 0;
    for (ex, d) in clean.iter().zip(&decisions) {
        let gold = ex.gold_label.ok_or_else(|| {
            Error::InvalidArgument(format!("clean example `{}` has no gold label", ex.id))
        })?;
        correct += usize::from(!d.flagged && d.predicted == gold);
    }
    let clean_conf = decisions.iter().map(|d| d.confidence).sum::<f64>() / clean.len() as f64;

    let mut per_transform = Vec::new();
    let (mut flagged_total, mut n_total, mut conf_total) = (0usize, 0usize, 0.0f64);
    for (kind, examples) in invalid {
        if examples.is_empty() {
            continue;
        }
        let ds = detector.decide(examples)?;
        let flagged = ds.iter().filter(|d| d.flagged).count();
        let conf: f64 = ds.iter().map(|d| d.confidence).sum();
        flagged_total += flagged;
        n_total += ds.len();
        conf_total += conf;
        per_transform.push(TransformDetection {
            transform: *kind,
            detected: 100.0 * flagged as f64 / ds.len() as f64,
            mean_confidence: 100.0 * conf / ds.len() as f64,
            n: ds.len(),
        });
    }
    let pct = |num: f64, den: usize| if den == 0 { 0.0 } else { 100.0 * num / den as f64 };
    Ok(MitigationReport {
        clean_accuracy: pct(correct as f64, clean.len()),
        invalid_detected: pct(flagged_total as f64, n_total),
        per_transform,
        clean_mean_confidence: 100.0 * clean_conf,
        invalid_mean_confidence: pct(conf_total, n_total),
    })
}

/// Invalid versions of `examples` for each runnable kind, trimmed to equal
/// counts. Kinds that cannot run are returned with the reason.
pub fn invalid_sets(
    examples: &[Example],
    kinds: &[TransformKind],
    engine: &TransformEngine<'_>,
    seed: u64,
) -> Result<(Vec<(TransformKind, Vec<Example>)>, Vec<(TransformKind, String)>)> {
    let (runnable, unavailable) = engine.partition_kinds(kinds);
    let mut skipped: Vec<(TransformKind, String)> =
        unavailable.into_iter().map(|(k, e)| (k, e.to_string())).collect();
    let mut sets = Vec::new();
    for kind in runnable {
        let spec = TransformSpec::new(kind, engine.task_kind()).with_seed(seed);
        match engine.apply_batch(examples, &spec) {
            Ok(out) => {
                let exs: Vec<Example> = out
                    .transformed
                    .into_iter()
                    .map(|t| {
                        let mut e = t.example;
                        e.id = format!("{}#{}", t.source_id, kind);
                        e.gold_label = None;
                        e
                    })
                    .collect();
                sets.push((kind, exs));
            }
            Err(e) => skipped.push((kind, e.to_string())),
        }
    }
    sets.retain(|(k, v)| {
        if v.is_empty() {
            log::warn!("{k}: no transformable examples");
        }
        !v.is_empty()
    });
    if let Some(min) = sets.iter().map(|(_, v)| v.len()).min() {
        for (_, v) in &mut sets {
            v.truncate(min);
        }
    }
    Ok((sets, skipped))
}
