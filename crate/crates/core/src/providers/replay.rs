use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_saliency_alignment, Prediction, Provider, ProviderDescriptor, ProviderKind};
use crate::corpus::{Example, Side};
use crate::error::{Error, Result};
use crate::xform::gradient::SaliencyScores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRecord {
    pub id: String,
    pub loss_label: usize,
    pub scores: Vec<f64>,
    /// Scored side; absent means the task's default target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    read_jsonl(path)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let recs: Vec<PredictionRecord> = preds
        .iter()
        .map(|p| PredictionRecord {
            id: p.id.clone(),
            probs: p.probs.clone(),
        })
        .collect();
    write_jsonl(path, &recs)
}

pub fn read_saliency(path: &Path) -> Result<Vec<SaliencyRecord>> {
    read_jsonl(path)
}

pub fn write_saliency(path: &Path, records: &[SaliencyRecord]) -> Result<()> {
    write_jsonl(path, records)
}

/// Serves predictions and saliency recorded earlier, keyed by example id.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    preds: HashMap<String, Vec<f64>>,
    saliency: HashMap<(String, Option<Side>), SaliencyRecord>,
    n_classes: usize,
    location: String,
    has_saliency: bool,
}

impl ReplayProvider {
    pub fn from_records(
        preds: Vec<PredictionRecord>,
        saliency: Option<Vec<SaliencyRecord>>,
        n_classes: usize,
    ) -> Result<Self> {
        let mut map = HashMap::with_capacity(preds.len());
        for p in preds {
            if map.insert(p.id.clone(), p.probs).is_some() {
                return Err(Error::DuplicateId(p.id));
            }
        }
        let has_saliency = saliency.is_some();
        let mut sal = HashMap::new();
        for s in saliency.unwrap_or_default() {
            let key = (s.id.clone(), s.side);
            if sal.insert(key, s.clone()).is_some() {
                return Err(Error::DuplicateId(s.id));
            }
        }
        Ok(ReplayProvider {
            preds: map,
            saliency: sal,
            n_classes,
            location: "<in-memory>".into(),
            has_saliency,
        })
    }

    pub fn from_files(pred_path: &Path, saliency_path: Option<&Path>, n_classes: usize) -> Result<Self> {
        let preds = read_predictions(pred_path)?;
        let sal = saliency_path.map(read_saliency).transpose()?;
        let mut p = Self::from_records(preds, sal, n_classes)?;
        p.location = pred_path.display().to_string();
        Ok(p)
    }
}

impl Provider for ReplayProvider {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            kind: ProviderKind::Replay,
            location: self.location.clone(),
            supports_saliency: self.has_saliency,
        }
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, inputs: &[Example]) -> Result<Vec<Prediction>> {
        inputs
            .iter()
            .map(|ex| {
                let probs = self
                    .preds
                    .get(&ex.id)
                    .ok_or_else(|| Error::MissingPrediction(ex.id.clone()))?;
                Prediction::from_probs(ex.id.clone(), probs.clone(), self.n_classes)
            })
            .collect()
    }

    fn saliency_batch(
        &self,
        inputs: &[Example],
        loss_labels: &[usize],
        side: Side,
    ) -> Result<Vec<SaliencyScores>> {
        if !self.has_saliency {
            return Err(Error::Capability(format!(
                "replay provider {} has no saliency file",
                self.location
            )));
        }
        if inputs.len() != loss_labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} loss labels",
                inputs.len(),
                loss_labels.len()
            )));
        }
        inputs
            .iter()
            .map(|ex| {
                let rec = self
                    .saliency
                    .get(&(ex.id.clone(), Some(side)))
                    .or_else(|| self.saliency.get(&(ex.id.clone(), None)))
                    .ok_or_else(|| Error::MissingPrediction(ex.id.clone()))?;
                let s = SaliencyScores::new(rec.scores.clone(), rec.loss_label)
                    .map_err(|e| Error::Contract(format!("`{}`: {e}", ex.id)))?;
                check_saliency_alignment(ex, side, &s)?;
                Ok(s)
            })
            .collect()
    }
}
