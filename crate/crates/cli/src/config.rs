//! The resolved run configuration: defaults, overlaid by an optional JSON
//! file, overlaid by command-line flags. Every run writes it verbatim into
//! its output directory together with its hash.

use std::fs;
use std::path::{Path, PathBuf};

use saladbench::corpus::{Bundled, DataFormat, LabelSet, TaskKind};
use saladbench::mitigate::MitigationConfig;
use saladbench::providers::ProviderKind;
use saladbench::toyclf::{LossConfig, TrainConfig};
use saladbench::xform::statistical::PbsmtConfig;
use saladbench::xform::{TransformKind, DEFAULT_R};
use saladbench::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_FILE: &str = "config.json";
pub const CONFIG_HASH_FILE: &str = "config.sha256";

/// Seeds used for Shuffle when none are configured.
pub const DEFAULT_SHUFFLE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// One of the corpora shipped with the tool; fills in paths, task and labels.
    pub bundled: Option<String>,
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub format: Option<DataFormat>,
    pub task: Option<TaskKind>,
    pub labels: Vec<String>,
    pub default_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Model file (embedded), predictions directory (replay) or base URL (http).
    pub location: Option<String>,
    /// Saliency records for the evaluation set (replay only).
    pub saliency: Option<PathBuf>,
    /// Whether the HTTP endpoint answers saliency requests.
    pub http_saliency: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Embedded,
            location: None,
            saliency: None,
            http_saliency: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub data: DataConfig,
    pub provider: ProviderConfig,
    pub transforms: Vec<TransformKind>,
    /// Seeds for Shuffle variants; other kinds use `seed`.
    pub shuffle_seeds: Vec<u64>,
    pub r: f64,
    /// Directory of trained PBSMT generators; trained inline from the
    /// training set when absent.
    pub generators: Option<PathBuf>,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub mitigation: MitigationConfig,
    pub pbsmt: PbsmtConfig,
    /// Also compute the transfer matrix during `mitigate`.
    pub transfer_matrix: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: 0,
            data: DataConfig::default(),
            provider: ProviderConfig::default(),
            transforms: TransformKind::ALL.to_vec(),
            shuffle_seeds: DEFAULT_SHUFFLE_SEEDS.to_vec(),
            r: DEFAULT_R,
            generators: None,
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            mitigation: MitigationConfig::default(),
            pbsmt: PbsmtConfig::default(),
            transfer_matrix: false,
        }
    }
}

/// Where the data for a run lives, with bundled corpora resolved.
#[derive(Debug, Clone)]
pub struct ResolvedData {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub format: Option<DataFormat>,
    pub task: TaskKind,
    pub labels: LabelSet,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(as_config)?;
        self.loss.validate().map_err(as_config)?;
        self.pbsmt.weights.validate().map_err(as_config)?;
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Config(format!("r = {} outside (0, 1]", self.r)));
        }
        if self.shuffle_seeds.is_empty() {
            return Err(Error::Config("shuffle_seeds is empty".into()));
        }
        if self.transforms.is_empty() {
            return Err(Error::Config("no transforms configured".into()));
        }
        let data = self.resolve_data()?;
        self.mitigation.validate(data.labels.n_classes())?;
        Ok(())
    }

    pub fn resolve_data(&self) -> Result<ResolvedData> {
        let d = &self.data;
        let bundled: Option<Bundled> = d.bundled.as_deref().map(str::parse).transpose()?;
        let task = d
            .task
            .or(bundled.map(Bundled::task_kind))
            .ok_or_else(|| Error::Config("data.task is required (single or pair)".into()))?;
        let labels = if !d.labels.is_empty() {
            let mut l = LabelSet::new(d.labels.iter().cloned()).map_err(as_config)?;
            if let Some(name) = &d.default_label {
                l = l.with_default_name(name).map_err(as_config)?;
            }
            l
        } else if let Some(b) = bundled {
            b.labels()
        } else {
            return Err(Error::Config("data.labels is required".into()));
        };
        Ok(ResolvedData {
            train: d.train.clone().or(bundled.map(Bundled::train_path)),
            eval: d.eval.clone().or(bundled.map(Bundled::dev_path)),
            format: d.format,
            task,
            labels,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Writes `config.json` and `config.sha256` into `out`; returns the hash.
    pub fn persist(&self, out: &Path) -> Result<String> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let hash = self.hash()?;
        let cfg_path = out.join(CONFIG_FILE);
        fs::write(&cfg_path, self.to_json()?).map_err(|e| Error::io(&cfg_path, e))?;
        let hash_path = out.join(CONFIG_HASH_FILE);
        fs::write(&hash_path, format!("{hash}\n")).map_err(|e| Error::io(&hash_path, e))?;
        Ok(hash)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}
