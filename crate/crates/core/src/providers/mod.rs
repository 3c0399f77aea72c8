//! Classifier access: an in-process toy model, replayed prediction files, or
//! a remote model over HTTP, all behind [`Provider`].

mod embedded;
mod http;
mod replay;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Side};
use crate::error::{Error, Result};
use crate::xform::gradient::SaliencyScores;

pub use embedded::EmbeddedProvider;
pub use http::{HttpProvider, DEFAULT_MAX_IN_FLIGHT, TIMEOUT_ENV};
pub use replay::{
    read_predictions, read_saliency, write_predictions, write_saliency, PredictionRecord,
    ReplayProvider, SaliencyRecord,
};

/// Sums within this distance of one are renormalised; beyond it the
/// provider is in breach of contract.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

impl Prediction {
    pub fn from_probs(id: impl Into<String>, mut probs: Vec<f64>, n_classes: usize) -> Result<Self> {
        let id = id.into();
        if probs.len() != n_classes {
            return Err(Error::Contract(format!(
                "`{id}`: {} probabilities for {n_classes} classes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Contract(format!("`{id}`: invalid probability in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::Contract(format!(
                "`{id}`: probabilities sum to {total}"
            )));
        }
        if (total - 1.0).abs() > 1e-12 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        let predicted = argmax(&probs);
        let confidence = probs[predicted];
        Ok(Prediction {
            id,
            probs,
            predicted,
            confidence,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Embedded,
    Replay,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub kind: ProviderKind,
    pub location: String,
    pub supports_saliency: bool,
}

pub trait Provider: Send + Sync {
    fn descriptor(&self) -> ProviderDescriptor;

    fn n_classes(&self) -> usize;

    /// One prediction per input, in input order.
    fn predict_batch(&self, inputs: &[Example]) -> Result<Vec<Prediction>>;

    /// Token saliency for `side` of each input, computed against the
    /// matching entry of `loss_labels`.
    fn saliency_batch(
        &self,
        inputs: &[Example],
        loss_labels: &[usize],
        side: Side,
    ) -> Result<Vec<SaliencyScores>>;

    /// Replacement vocabulary, when the provider knows one.
    fn vocabulary(&self) -> Option<Vec<String>> {
        None
    }
}

/// Gold label where present, otherwise the provider's own prediction.
pub fn loss_labels(provider: &dyn Provider, inputs: &[Example]) -> Result<Vec<usize>> {
    let unlabeled: Vec<Example> = inputs
        .iter()
        .filter(|e| e.gold_label.is_none())
        .cloned()
        .collect();
    let mut predicted = if unlabeled.is_empty() {
        Vec::new()
    } else {
        provider.predict_batch(&unlabeled)?
    }
    .into_iter();
    Ok(inputs
        .iter()
        .map(|e| {
            e.gold_label
                .unwrap_or_else(|| predicted.next().expect("one prediction per input").predicted)
        })
        .collect())
}

pub(crate) fn check_saliency_alignment(ex: &Example, side: Side, s: &SaliencyScores) -> Result<()> {
    let n = ex
        .input
        .side(side)
        .map(|t| crate::corpus::tokenize(t).len())
        .unwrap_or(0);
    if s.len() != n {
        return Err(Error::Contract(format!(
            "`{}`: {} saliency scores for {n} tokens on side {side}",
            ex.id,
            s.len()
        )));
    }
    Ok(())
}
