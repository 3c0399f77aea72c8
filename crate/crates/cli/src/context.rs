//! Shared setup for commands: datasets, the prediction provider, PBSMT
//! generators and output locations.

use std::fs;
use std::path::{Path, PathBuf};

use saladbench::corpus::{load_dataset, DataFormat, Dataset};
use saladbench::metrics::{file_checksum, DatasetChecksum};
use saladbench::providers::{
    EmbeddedProvider, HttpProvider, Provider, ProviderKind, ReplayProvider,
};
use saladbench::toyclf::{self, load_model, ToyModel};
use saladbench::xform::statistical::PbsmtGenerators;
use saladbench::{Error, Result};

use crate::config::{ResolvedData, RunConfig};

/// Name of the replay file holding predictions on the untransformed set.
pub const ORIGINAL_SET: &str = "original";

pub struct Context {
    pub cfg: RunConfig,
    pub data: ResolvedData,
    pub out: PathBuf,
    pub config_hash: String,
}

impl Context {
    /// Validates `cfg`, then records it in `out`.
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Context> {
        cfg.validate()?;
        let data = cfg.resolve_data()?;
        let config_hash = cfg.persist(&out)?;
        Ok(Context {
            cfg,
            data,
            out,
            config_hash,
        })
    }

    fn load(&self, path: &Path) -> Result<Dataset> {
        let format = self.data.format.unwrap_or_else(|| DataFormat::from_path(path));
        Ok(load_dataset(path, format, &self.data.labels, self.data.task)?.dataset)
    }

    pub fn train_set(&self) -> Result<Dataset> {
        let path = self
            .data
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("no training set configured (data.train)".into()))?;
        self.load(path)
    }

    pub fn eval_set(&self) -> Result<Dataset> {
        let path = self
            .data
            .eval
            .as_ref()
            .ok_or_else(|| Error::Config("no evaluation set configured (data.eval)".into()))?;
        self.load(path)
    }

    /// Checksums of the configured dataset files, for report provenance.
    pub fn checksums(&self) -> Result<Vec<DatasetChecksum>> {
        [&self.data.train, &self.data.eval]
            .into_iter()
            .flatten()
            .map(|p| file_checksum(p))
            .collect()
    }

    pub fn output_format(&self) -> DataFormat {
        self.data.format.unwrap_or(DataFormat::Tsv)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn location(&self) -> Result<&str> {
        self.cfg.provider.location.as_deref().ok_or_else(|| {
            Error::Config(format!(
                "provider.location is required for the {:?} provider",
                self.cfg.provider.kind
            ))
        })
    }

    /// The embedded model named by the provider location.
    pub fn model(&self) -> Result<ToyModel> {
        if self.cfg.provider.kind != ProviderKind::Embedded {
            return Err(Error::Config("this command needs the embedded provider".into()));
        }
        load_model(Path::new(self.location()?))
    }

    /// The configured model if a location is given, else a fresh baseline
    /// trained on `train` with the configured loss.
    pub fn model_or_train(&self, train: &Dataset) -> Result<ToyModel> {
        if self.cfg.provider.location.is_some() {
            return self.model();
        }
        log::info!("no model given; training a baseline on {} examples", train.len());
        toyclf::train(train, &self.cfg.loss, &self.cfg.train, None)
    }

    /// Where predictions come from. An embedded provider without a model
    /// file trains a baseline on `train`.
    pub fn providers(&self, train: Option<&Dataset>) -> Result<Providers> {
        let n = self.data.labels.n_classes();
        let p = &self.cfg.provider;
        Ok(match p.kind {
            ProviderKind::Embedded => {
                let provider = match &p.location {
                    Some(loc) => EmbeddedProvider::new(load_model(Path::new(loc))?).with_location(loc),
                    None => {
                        let train = train.ok_or_else(|| {
                            Error::Config("an embedded provider needs provider.location or data.train".into())
                        })?;
                        EmbeddedProvider::new(self.model_or_train(train)?)
                    }
                };
                Providers::Shared(Box::new(provider))
            }
            ProviderKind::Replay => Providers::Replay {
                dir: PathBuf::from(self.location()?),
                saliency: p.saliency.clone(),
                n_classes: n,
            },
            ProviderKind::Http => Providers::Shared(Box::new(
                HttpProvider::new(self.location()?, n).with_saliency(p.http_saliency),
            )),
        })
    }

    /// Loads generators from the configured directory, or trains them on
    /// `train` when one is available.
    pub fn generators(&self, train: Option<&Dataset>) -> Result<Option<PbsmtGenerators>> {
        if let Some(dir) = &self.cfg.generators {
            return PbsmtGenerators::load(dir).map(Some);
        }
        match train {
            Some(ds) => PbsmtGenerators::train_all(ds, self.cfg.pbsmt).map(Some),
            None => Ok(None),
        }
    }

    /// The training set, if one is configured and loads.
    pub fn optional_train_set(&self) -> Result<Option<Dataset>> {
        match &self.data.train {
            Some(_) => self.train_set().map(Some),
            None => Ok(None),
        }
    }
}

pub enum Providers {
    /// One provider answers for every set.
    Shared(Box<dyn Provider>),
    /// Recorded predictions, one `<set>.jsonl` file per prediction set.
    Replay {
        dir: PathBuf,
        saliency: Option<PathBuf>,
        n_classes: usize,
    },
}

/// A provider for one prediction set, borrowed or freshly loaded.
pub enum SetProvider<'a> {
    Borrowed(&'a dyn Provider),
    Owned(Box<dyn Provider>),
}

impl<'a> std::ops::Deref for SetProvider<'a> {
    type Target = dyn Provider + 'a;

    fn deref(&self) -> &Self::Target {
        match self {
            SetProvider::Borrowed(p) => *p,
            SetProvider::Owned(p) => p.as_ref(),
        }
    }
}

impl Providers {
    pub fn get(&self, set: &str) -> Result<SetProvider<'_>> {
        match self {
            Providers::Shared(p) => Ok(SetProvider::Borrowed(p.as_ref())),
            Providers::Replay {
                dir,
                saliency,
                n_classes,
            } => {
                let path = dir.join(format!("{set}.jsonl"));
                let saliency = if set == ORIGINAL_SET { saliency.as_deref() } else { None };
                Ok(SetProvider::Owned(Box::new(ReplayProvider::from_files(
                    &path, saliency, *n_classes,
                )?)))
            }
        }
    }
}
