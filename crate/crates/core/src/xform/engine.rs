//! Batch application of transforms, fetching saliency from a provider when
//! a kind needs it.

use super::gradient::{copy_one, edit_by_saliency, SaliencyScores};
use super::lexical::{copy_sort, reorder};
use super::statistical::{generate_invalid, PbsmtGenerators};
use super::{TransformKind, TransformSpec, TransformedExample};
use crate::corpus::{Example, Side, TaskKind};
use crate::error::{Error, Result};
use crate::par;
use crate::providers::{loss_labels, Provider};

/// Result of transforming a batch: successes in input order, plus the ids
/// that could not be transformed and why.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    pub transformed: Vec<TransformedExample>,
    pub skipped: Vec<(String, Error)>,
}

pub struct TransformEngine<'a> {
    task: TaskKind,
    saliency: Option<&'a dyn Provider>,
    vocabulary: Vec<String>,
    generators: Option<&'a PbsmtGenerators>,
}

impl<'a> TransformEngine<'a> {
    pub fn new(task: TaskKind) -> Self {
        TransformEngine {
            task,
            saliency: None,
            vocabulary: Vec::new(),
            generators: None,
        }
    }

    pub fn with_saliency(mut self, provider: &'a dyn Provider) -> Self {
        self.saliency = Some(provider);
        self
    }

    /// Replacement vocabulary for the Replace kind.
    pub fn with_vocabulary(mut self, vocabulary: Vec<String>) -> Self {
        self.vocabulary = vocabulary;
        self
    }

    pub fn with_generators(mut self, generators: &'a PbsmtGenerators) -> Self {
        self.generators = Some(generators);
        self
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task
    }

    /// Whether `kind` can run with the configured sources; the error says
    /// what is missing.
    pub fn check(&self, kind: TransformKind) -> Result<()> {
        let unsupported = |reason: &str| Error::UnsupportedTransform {
            kind,
            reason: reason.into(),
        };
        if !kind.applicable(self.task) {
            return Err(unsupported("requires a pair task"));
        }
        if kind.needs_saliency() {
            match self.saliency {
                None => return Err(unsupported("no saliency source")),
                Some(p) if !p.descriptor().supports_saliency => {
                    return Err(unsupported("provider does not supply saliency"))
                }
                Some(_) => {}
            }
        }
        if kind == TransformKind::Replace && self.vocabulary.is_empty() {
            return Err(unsupported("no replacement vocabulary"));
        }
        if kind == TransformKind::Pbsmt && self.generators.map_or(true, |g| g.is_empty()) {
            return Err(unsupported("no trained generators"));
        }
        Ok(())
    }

    /// Kinds from `kinds` that can run, and the rest with reasons.
    pub fn partition_kinds(
        &self,
        kinds: &[TransformKind],
    ) -> (Vec<TransformKind>, Vec<(TransformKind, Error)>) {
        let mut ok = Vec::new();
        let mut skipped = Vec::new();
        for &k in kinds {
            match self.check(k) {
                Ok(()) => ok.push(k),
                Err(e) => skipped.push((k, e)),
            }
        }
        (ok, skipped)
    }

    fn apply_one(
        &self,
        ex: &Example,
        spec: &TransformSpec,
        scores: Option<&SaliencyScores>,
    ) -> Result<TransformedExample> {
        match spec.kind {
            TransformKind::Sort | TransformKind::Reverse | TransformKind::Shuffle => {
                reorder(ex, spec)
            }
            TransformKind::CopySort => copy_sort(ex, spec),
            TransformKind::CopyOne => copy_one(ex, scores.expect("saliency fetched"), spec),
            TransformKind::Drop | TransformKind::Repeat | TransformKind::Replace => {
                edit_by_saliency(ex, scores.expect("saliency fetched"), &self.vocabulary, spec)
            }
            TransformKind::Pbsmt => {
                generate_invalid(ex, self.generators.expect("checked"), spec)
            }
        }
    }

    /// Transforms a single example, fetching its saliency if needed.
    pub fn apply(&self, ex: &Example, spec: &TransformSpec) -> Result<TransformedExample> {
        let mut out = self.apply_batch(std::slice::from_ref(ex), spec)?;
        match out.skipped.pop() {
            Some((_, e)) => Err(e),
            None => Ok(out.transformed.pop().expect("one output")),
        }
    }

    /// Transforms every example. Kind-level problems (missing capability,
    /// bad spec, provider failure) are errors; per-example failures are
    /// collected in [`BatchOutcome::skipped`].
    pub fn apply_batch(&self, examples: &[Example], spec: &TransformSpec) -> Result<BatchOutcome> {
        spec.validate(self.task)?;
        self.check(spec.kind)?;
        let scores: Option<Vec<SaliencyScores>> = if spec.kind.needs_saliency() {
            let provider = self.saliency.expect("checked");
            let side = if spec.kind == TransformKind::CopyOne {
                Side::A
            } else {
                spec.target_side
            };
            let labels = loss_labels(provider, examples)?;
            Some(provider.saliency_batch(examples, &labels, side)?)
        } else {
            None
        };
        let idx: Vec<usize> = (0..examples.len()).collect();
        let results = par::map(&idx, |&i| {
            self.apply_one(&examples[i], spec, scores.as_ref().map(|s| &s[i]))
        });
        let mut outcome = BatchOutcome::default();
        for (ex, r) in examples.iter().zip(results) {
            match r {
                Ok(t) => outcome.transformed.push(t),
                Err(e) => outcome.skipped.push((ex.id.clone(), e)),
            }
        }
        Ok(outcome)
    }
}
