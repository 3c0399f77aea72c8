use std::fmt::Write as _;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{agreement, default_agreement, mean_confidence};
use crate::error::{Error, Result};
use crate::providers::{Prediction, ProviderDescriptor};
use crate::xform::{Family, TransformKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedValue {
    pub seed: u64,
    pub agreement: f64,
    pub mean_confidence: f64,
}

/// One transform's row. `agreement` is `None` where the transform is not
/// defined for the task; such rows print as `--`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub transform: TransformKind,
    pub agreement: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub n: usize,
    /// Agreement is measured against the default label.
    pub default_label: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<SeedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReportRow {
    pub fn undefined(transform: TransformKind, note: impl Into<String>) -> Self {
        ReportRow {
            transform,
            agreement: None,
            mean_confidence: None,
            n: 0,
            default_label: transform.uses_default_label(),
            per_seed: Vec::new(),
            note: Some(note.into()),
        }
    }
}

/// Builds a row from one or more seed variants of a transform, averaging
/// across seeds. Original predictions are looked up by id.
pub fn transform_row(
    transform: TransformKind,
    original: &[Prediction],
    variants: &[(u64, Vec<Prediction>)],
    default_label: Option<usize>,
) -> Result<ReportRow> {
    if variants.is_empty() {
        return Err(Error::InvalidArgument(format!("no predictions for {transform}")));
    }
    let by_id: std::collections::HashMap<&str, &Prediction> =
        original.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut per_seed = Vec::with_capacity(variants.len());
    let mut n = 0;
    for (seed, preds) in variants {
        let agree = if transform.uses_default_label() {
            default_agreement(preds, default_label)?
        } else {
            let orig: Vec<Prediction> = preds
                .iter()
                .map(|p| {
                    by_id
                        .get(p.id.as_str())
                        .map(|&o| o.clone())
                        .ok_or_else(|| Error::Alignment(format!("no original prediction for `{}`", p.id)))
                })
                .collect::<Result<_>>()?;
            agreement(&orig, preds)?
        };
        per_seed.push(SeedValue {
            seed: *seed,
            agreement: agree,
            mean_confidence: mean_confidence(preds)?,
        });
        n = n.max(preds.len());
    }
    let k = per_seed.len() as f64;
    let agreement = per_seed.iter().map(|s| s.agreement).sum::<f64>() / k;
    let confidence = per_seed.iter().map(|s| s.mean_confidence).sum::<f64>() / k;
    Ok(ReportRow {
        transform,
        agreement: Some(agreement),
        mean_confidence: Some(confidence),
        n,
        default_label: transform.uses_default_label(),
        per_seed: if variants.len() > 1 { per_seed } else { Vec::new() },
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAverage {
    pub family: Family,
    pub agreement: f64,
    pub mean_confidence: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetChecksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: ProviderDescriptor,
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetChecksum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_classes: usize,
    /// Accuracy on the untransformed inputs, when gold labels exist.
    pub original_accuracy: Option<f64>,
    pub original_confidence: f64,
    pub ece: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    pub family_averages: Vec<FamilyAverage>,
    pub random_baseline: f64,
    pub n_classes: usize,
    pub original_accuracy: Option<f64>,
    pub original_confidence: f64,
    pub ece: Option<f64>,
    pub provenance: Provenance,
}

/// Assembles rows with lexical and gradient family averages and the
/// `100/N` random baseline.
pub fn build_report(rows: Vec<ReportRow>, meta: ReportMeta) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("a report needs at least one row".into()));
    }
    if meta.n_classes == 0 {
        return Err(Error::InvalidArgument("n_classes must be positive".into()));
    }
    let family_averages = [Family::Lexical, Family::Gradient]
        .into_iter()
        .filter_map(|family| {
            let defined: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.transform.family() == family && r.agreement.is_some())
                .collect();
            if defined.is_empty() {
                return None;
            }
            let k = defined.len() as f64;
            Some(FamilyAverage {
                family,
                agreement: defined.iter().filter_map(|r| r.agreement).sum::<f64>() / k,
                mean_confidence: defined.iter().filter_map(|r| r.mean_confidence).sum::<f64>() / k,
                rows: defined.len(),
            })
        })
        .collect();
    Ok(MetricsReport {
        rows,
        family_averages,
        random_baseline: 100.0 / meta.n_classes as f64,
        n_classes: meta.n_classes,
        original_accuracy: meta.original_accuracy,
        original_confidence: meta.original_confidence,
        ece: meta.ece,
        provenance: meta.provenance,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x:.2}"))
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One line per transform plus family averages and the random row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("transform,family,agreement,mean_confidence,n,seed_agreements\n");
        for r in &self.rows {
            let seeds = r
                .per_seed
                .iter()
                .map(|s| format!("{:.4}", s.agreement))
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.transform,
                family_name(r.transform.family()),
                cell(r.agreement),
                cell(r.mean_confidence),
                r.n,
                seeds
            );
        }
        for f in &self.family_averages {
            let _ = writeln!(
                out,
                "avg-{},{},{:.2},{:.2},{},",
                family_name(f.family),
                family_name(f.family),
                f.agreement,
                f.mean_confidence,
                f.rows
            );
        }
        let _ = writeln!(
            out,
            "random,,{:.2},{:.2},,",
            self.random_baseline, self.random_baseline
        );
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Transform | Agreement (%) | Confidence (%) | n |\n|---|---:|---:|---:|\n");
        if let Some(acc) = self.original_accuracy {
            let _ = writeln!(
                out,
                "| original (accuracy) | {acc:.2} | {:.2} | |",
                self.original_confidence
            );
        }
        for r in &self.rows {
            let name = if r.default_label {
                format!("{} (default label)", r.transform)
            } else {
                r.transform.to_string()
            };
            let n = if r.n == 0 { "--".to_string() } else { r.n.to_string() };
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {n} |",
                cell(r.agreement),
                cell(r.mean_confidence)
            );
        }
        for f in &self.family_averages {
            let label = match f.family {
                Family::Lexical => "Avg. Lex.",
                Family::Gradient => "Avg. Grad.",
                Family::Statistical => "Avg. Stat.",
            };
            let _ = writeln!(out, "| {label} | {:.2} | {:.2} | |", f.agreement, f.mean_confidence);
        }
        let _ = writeln!(
            out,
            "| Random | {:.2} | {:.2} | |",
            self.random_baseline, self.random_baseline
        );
        if let Some(e) = self.ece {
            let _ = writeln!(out, "\nECE: {e:.4}");
        }
        out
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::Lexical => "lexical",
        Family::Gradient => "gradient",
        Family::Statistical => "statistical",
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_checksum(path: &Path) -> Result<DatasetChecksum> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let k = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(DatasetChecksum {
        path: path.display().to_string(),
        sha256: format!("{:x}", hasher.finalize()),
    })
}
