//! Destructive transformations: lexical reorderings, saliency-guided edits,
//! and the per-label statistical generator.

pub mod engine;
pub mod gradient;
pub mod lexical;
pub mod statistical;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Side, TaskKind};
use crate::error::{Error, Result};

pub use engine::{BatchOutcome, TransformEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Sort,
    Reverse,
    Shuffle,
    CopySort,
    Drop,
    Repeat,
    Replace,
    CopyOne,
    Pbsmt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lexical,
    Gradient,
    Statistical,
}

impl TransformKind {
    pub const ALL: [TransformKind; 9] = [
        TransformKind::Sort,
        TransformKind::Reverse,
        TransformKind::Shuffle,
        TransformKind::CopySort,
        TransformKind::Drop,
        TransformKind::Repeat,
        TransformKind::Replace,
        TransformKind::CopyOne,
        TransformKind::Pbsmt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Sort => "sort",
            TransformKind::Reverse => "reverse",
            TransformKind::Shuffle => "shuffle",
            TransformKind::CopySort => "copysort",
            TransformKind::Drop => "drop",
            TransformKind::Repeat => "repeat",
            TransformKind::Replace => "replace",
            TransformKind::CopyOne => "copyone",
            TransformKind::Pbsmt => "pbsmt",
        }
    }

    pub fn family(self) -> Family {
        use TransformKind::*;
        match self {
            Sort | Reverse | Shuffle | CopySort => Family::Lexical,
            Drop | Repeat | Replace | CopyOne => Family::Gradient,
            Pbsmt => Family::Statistical,
        }
    }

    /// Only defined for two-text inputs.
    pub fn requires_pair(self) -> bool {
        matches!(self, TransformKind::CopySort | TransformKind::CopyOne)
    }

    pub fn needs_saliency(self) -> bool {
        self.family() == Family::Gradient
    }

    /// False for pure reorderings, which keep the bag of words intact.
    pub fn changes_content(self) -> bool {
        !matches!(
            self,
            TransformKind::Sort | TransformKind::Reverse | TransformKind::Shuffle
        )
    }

    /// Copy transforms are scored against the task's default label.
    pub fn uses_default_label(self) -> bool {
        self.requires_pair()
    }

    pub fn applicable(self, task: TaskKind) -> bool {
        task == TaskKind::Pair || !self.requires_pair()
    }

    /// Parses a comma-separated list; `all` expands to every kind.
    pub fn parse_list(s: &str) -> Result<Vec<TransformKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(TransformKind::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transform `{s}`")))
    }
}

pub const DEFAULT_R: f64 = 0.5;
pub const DEFAULT_SHUFFLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub target_side: Side,
    pub seed: u64,
    pub r: f64,
    pub max_shuffle_attempts: usize,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, task: TaskKind) -> Self {
        TransformSpec {
            kind,
            target_side: task.default_target(),
            seed: 0,
            r: DEFAULT_R,
            max_shuffle_attempts: DEFAULT_SHUFFLE_ATTEMPTS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    /// `kind:seed:r`, e.g. `shuffle:17:0.5`.
    pub fn tag(&self) -> String {
        format!("{}:{}:{}", self.kind, self.seed, self.r)
    }

    pub fn parse_tag(tag: &str, task: TaskKind) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed transform tag `{tag}`"));
        let mut parts = tag.split(':');
        let kind: TransformKind = parts.next().ok_or_else(bad)?.parse()?;
        let seed = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let r = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(TransformSpec::new(kind, task).with_seed(seed).with_r(r))
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        if !self.kind.applicable(task) {
            return Err(Error::UnsupportedTransform {
                kind: self.kind,
                reason: "requires a pair task".into(),
            });
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::InvalidArgument(format!("r = {} outside (0, 1]", self.r)));
        }
        if task == TaskKind::Single && self.target_side == Side::B {
            return Err(Error::InvalidArgument(
                "single-input tasks have no side b".into(),
            ));
        }
        Ok(())
    }
}

/// `π(x)`: a transformed copy of an example plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedExample {
    pub example: Example,
    pub source_id: String,
    pub transform: TransformSpec,
    pub valid_label_erased: bool,
}

impl TransformedExample {
    pub(crate) fn replace_side(
        source: &Example,
        side: Side,
        text: String,
        spec: TransformSpec,
    ) -> TransformedExample {
        let mut example = source.clone();
        match side {
            Side::A => example.input.text_a = text,
            Side::B => example.input.text_b = Some(text),
        }
        TransformedExample {
            example,
            source_id: source.id.clone(),
            transform: spec,
            valid_label_erased: true,
        }
    }

    pub fn to_record(&self, labels: &crate::corpus::LabelSet) -> crate::corpus::Record {
        let mut rec = crate::corpus::Record::from_example(&self.example, labels);
        rec.source_id = Some(self.source_id.clone());
        rec.transform = Some(self.transform.tag());
        rec
    }
}
