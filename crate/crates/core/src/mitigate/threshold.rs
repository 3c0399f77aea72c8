use serde::{Deserialize, Serialize};

use super::MitigationConfig;
use crate::error::{Error, Result};
use crate::providers::Prediction;

/// Slack, in percentage points, when comparing clean accuracy against the
/// feasibility bound.
pub const FEASIBILITY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub theta: f64,
    /// Percent of clean examples accepted and correctly classified.
    pub clean_accuracy: f64,
    /// Percent of invalid examples rejected.
    pub detection: f64,
    /// False when no grid point met the accuracy bound.
    pub feasible: bool,
}

/// `1/N, 1/N + step, …` up to and including 1.0.
pub fn threshold_grid(n_classes: usize, step: f64) -> Vec<f64> {
    let start = 1.0 / n_classes as f64;
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let t = start + k as f64 * step;
        if t >= 1.0 - 1e-12 {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(1.0);
    grid
}

/// Percent of clean examples with confidence ≥ θ and a correct argmax.
pub fn clean_accuracy_at(preds: &[Prediction], gold: &[usize], theta: f64) -> f64 {
    let hits = preds
        .iter()
        .zip(gold)
        .filter(|(p, &y)| p.confidence >= theta && p.predicted == y)
        .count();
    100.0 * hits as f64 / preds.len() as f64
}

/// Percent of invalid examples with confidence < θ.
pub fn detection_at(preds: &[Prediction], theta: f64) -> f64 {
    let hits = preds.iter().filter(|p| p.confidence < theta).count();
    100.0 * hits as f64 / preds.len() as f64
}

/// Grid search for the rejection threshold: among θ whose clean accuracy is
/// within the tolerance of `baseline_accuracy` (percent), the one that
/// rejects the most invalid inputs; ties go to the smallest θ.
pub fn threshold_search(
    clean: &[Prediction],
    gold: &[usize],
    invalid: &[Prediction],
    baseline_accuracy: f64,
    cfg: &MitigationConfig,
) -> Result<ThresholdResult> {
    if clean.is_empty() || invalid.is_empty() {
        return Err(Error::InvalidArgument(
            "threshold search needs clean and invalid predictions".into(),
        ));
    }
    if clean.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} clean predictions vs {} gold labels",
            clean.len(),
            gold.len()
        )));
    }
    let n = clean[0].probs.len();
    let bound = baseline_accuracy - 100.0 * cfg.accuracy_tolerance - FEASIBILITY_EPSILON;
    let mut best: Option<ThresholdResult> = None;
    for theta in threshold_grid(n, cfg.grid_step) {
        let acc = clean_accuracy_at(clean, gold, theta);
        if acc < bound {
            continue;
        }
        let det = detection_at(invalid, theta);
        if best.is_none_or(|b| det > b.detection) {
            best = Some(ThresholdResult {
                theta,
                clean_accuracy: acc,
                detection: det,
                feasible: true,
            });
        }
    }
    Ok(best.unwrap_or_else(|| {
        let theta = 1.0 / n as f64;
        log::warn!("no threshold keeps clean accuracy within tolerance; using 1/N");
        ThresholdResult {
            theta,
            clean_accuracy: clean_accuracy_at(clean, gold, theta),
            detection: detection_at(invalid, theta),
            feasible: false,
        }
    }))
}
