//! Response metrics: agreement, default-label agreement, mean confidence,
//! expected calibration error, and report assembly.

mod report;

use crate::error::{Error, Result};
use crate::providers::Prediction;

pub use report::{
    build_report, file_checksum, transform_row, DatasetChecksum, FamilyAverage, MetricsReport,
    Provenance, ReportMeta, ReportRow, SeedValue,
};

pub const DEFAULT_ECE_BINS: usize = 10;

fn percent(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

/// Share of examples whose predicted label is unchanged, in percent.
pub fn agreement(original: &[Prediction], transformed: &[Prediction]) -> Result<f64> {
    if original.len() != transformed.len() {
        return Err(Error::Alignment(format!(
            "{} original vs {} transformed predictions",
            original.len(),
            transformed.len()
        )));
    }
    if original.is_empty() {
        return Err(Error::InvalidArgument("agreement over zero predictions".into()));
    }
    let mut same = 0;
    for (o, t) in original.iter().zip(transformed) {
        if o.id != t.id {
            return Err(Error::Alignment(format!("id `{}` paired with `{}`", o.id, t.id)));
        }
        same += usize::from(o.predicted == t.predicted);
    }
    Ok(percent(same, original.len()))
}

/// Share of predictions equal to the task's default label, in percent.
pub fn default_agreement(transformed: &[Prediction], default_label: Option<usize>) -> Result<f64> {
    let label = default_label
        .ok_or_else(|| Error::Config("label set has no default label".into()))?;
    if transformed.is_empty() {
        return Err(Error::InvalidArgument("agreement over zero predictions".into()));
    }
    let hits = transformed.iter().filter(|p| p.predicted == label).count();
    Ok(percent(hits, transformed.len()))
}

/// Mean probability of the predicted label, in percent.
pub fn mean_confidence(preds: &[Prediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("confidence over zero predictions".into()));
    }
    Ok(100.0 * preds.iter().map(|p| p.confidence).sum::<f64>() / preds.len() as f64)
}

/// Bin of confidence `c` among `bins` equal-width bins over (0, 1]:
/// bin m holds `m/B < c <= (m+1)/B`. Zero falls in the first bin.
pub fn ece_bin(c: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut m = ((c * b).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    while m > 0 && c <= m as f64 / b {
        m -= 1;
    }
    while m + 1 < bins && c > (m + 1) as f64 / b {
        m += 1;
    }
    m
}

/// `Σ_m (|B_m|/n)·|acc(B_m) − conf(B_m)|`, a fraction in [0, 1].
pub fn ece(preds: &[Prediction], gold: &[usize], bins: usize) -> Result<f64> {
    if preds.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            gold.len()
        )));
    }
    if preds.is_empty() || bins == 0 {
        return Err(Error::InvalidArgument("ECE needs predictions and at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    for (p, &y) in preds.iter().zip(gold) {
        let m = ece_bin(p.confidence, bins);
        count[m] += 1;
        correct[m] += usize::from(p.predicted == y);
        conf[m] += p.confidence;
    }
    let n = preds.len() as f64;
    Ok((0..bins)
        .filter(|&m| count[m] > 0)
        .map(|m| {
            let k = count[m] as f64;
            (k / n) * (correct[m] as f64 / k - conf[m] / k).abs()
        })
        .sum())
}

/// Plain accuracy in percent.
pub fn accuracy(preds: &[Prediction], gold: &[usize]) -> Result<f64> {
    if preds.len() != gold.len() || preds.is_empty() {
        return Err(Error::Alignment(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            gold.len()
        )));
    }
    let hits = preds.iter().zip(gold).filter(|(p, &y)| p.predicted == y).count();
    Ok(percent(hits, preds.len()))
}
