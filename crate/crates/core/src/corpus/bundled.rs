//! The small synthetic corpora shipped with the crate.

use std::path::PathBuf;
use std::str::FromStr;

use super::{load_dataset, DataFormat, Dataset, LabelSet, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bundled {
    /// Two-way sentiment over single sentences.
    Sentiment,
    /// Three-way entailment over premise/hypothesis pairs.
    Pair,
}

impl Bundled {
    pub fn name(self) -> &'static str {
        match self {
            Bundled::Sentiment => "sentiment",
            Bundled::Pair => "pair",
        }
    }

    pub fn task_kind(self) -> TaskKind {
        match self {
            Bundled::Sentiment => TaskKind::Single,
            Bundled::Pair => TaskKind::Pair,
        }
    }

    pub fn labels(self) -> LabelSet {
        match self {
            Bundled::Sentiment => LabelSet::new(["positive", "negative"]).expect("valid labels"),
            Bundled::Pair => LabelSet::new(["entailment", "neutral", "contradiction"])
                .and_then(|l| l.with_default_name("entailment"))
                .expect("valid labels"),
        }
    }

    pub fn data_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
    }

    pub fn train_path(self) -> PathBuf {
        Self::data_dir().join(format!("{}_train.tsv", self.name()))
    }

    pub fn dev_path(self) -> PathBuf {
        Self::data_dir().join(format!("{}_dev.tsv", self.name()))
    }

    /// `(train, dev)`.
    pub fn load(self) -> Result<(Dataset, Dataset)> {
        let labels = self.labels();
        let load = |p: PathBuf| {
            load_dataset(&p, DataFormat::Tsv, &labels, self.task_kind()).map(|l| l.dataset)
        };
        Ok((load(self.train_path())?, load(self.dev_path())?))
    }
}

impl FromStr for Bundled {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentiment" => Ok(Bundled::Sentiment),
            "pair" => Ok(Bundled::Pair),
            _ => Err(Error::InvalidArgument(format!("unknown bundled corpus `{s}`"))),
        }
    }
}
