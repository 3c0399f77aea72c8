use std::sync::Arc;

use super::{check_saliency_alignment, Prediction, Provider, ProviderDescriptor, ProviderKind};
use crate::corpus::{Example, Side};
use crate::error::{Error, Result};
use crate::par;
use crate::toyclf::ToyModel;
use crate::xform::gradient::SaliencyScores;

#[derive(Debug, Clone)]
pub struct EmbeddedProvider {
    model: Arc<ToyModel>,
    location: String,
}

impl EmbeddedProvider {
    pub fn new(model: ToyModel) -> Self {
        EmbeddedProvider {
            model: Arc::new(model),
            location: "<in-memory>".into(),
        }
    }

    pub fn with_location(mut self, location: impl Into<String>) -> Self {
        self.location = location.into();
        self
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }
}

impl Provider for EmbeddedProvider {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            kind: ProviderKind::Embedded,
            location: self.location.clone(),
            supports_saliency: true,
        }
    }

    fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    fn predict_batch(&self, inputs: &[Example]) -> Result<Vec<Prediction>> {
        let n = self.model.n_classes();
        par::try_map(inputs, |ex| {
            Prediction::from_probs(ex.id.clone(), self.model.forward(ex)?, n)
        })
    }

    fn saliency_batch(
        &self,
        inputs: &[Example],
        loss_labels: &[usize],
        side: Side,
    ) -> Result<Vec<SaliencyScores>> {
        if inputs.len() != loss_labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} loss labels",
                inputs.len(),
                loss_labels.len()
            )));
        }
        let items: Vec<(&Example, usize)> = inputs.iter().zip(loss_labels.iter().copied()).collect();
        par::try_map(&items, |(ex, y)| {
            let s = self.model.saliency(ex, *y, side)?;
            check_saliency_alignment(ex, side, &s)?;
            Ok(s)
        })
    }

    fn vocabulary(&self) -> Option<Vec<String>> {
        Some(self.model.words())
    }
}
