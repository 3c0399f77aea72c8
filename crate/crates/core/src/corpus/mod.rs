//! Shared data model: tokens, examples, label sets, datasets.

mod bundled;
mod io;

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundled::Bundled;
pub use io::{
    load_dataset, read_records, write_dataset, write_records, DataFormat, LoadedDataset, Record,
};

/// Characters detached from the edges of a whitespace chunk.
pub const EDGE_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')'];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<Token>,
}

impl TokenSeq {
    /// Builds a sequence from surfaces, assigning consecutive positions.
    pub fn from_surfaces<I, S>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = surfaces
            .into_iter()
            .enumerate()
            .map(|(position, s)| Token {
                surface: s.into(),
                position,
            })
            .collect();
        TokenSeq { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn surface_vec(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(|t| t.surface.as_str())
    }

    pub fn last(&self) -> Option<&str> {
        self.tokens.last().map(|t| t.surface.as_str())
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&detokenize(self))
    }
}

/// Whitespace split, edge punctuation detached into single-character tokens,
/// everything lowercased.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut out: Vec<String> = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut lo = 0;
        while lo < chars.len() && EDGE_PUNCT.contains(&chars[lo]) {
            lo += 1;
        }
        let mut hi = chars.len();
        while hi > lo && EDGE_PUNCT.contains(&chars[hi - 1]) {
            hi -= 1;
        }
        out.extend(chars[..lo].iter().map(|c| c.to_string()));
        if hi > lo {
            let core: String = chars[lo..hi].iter().collect();
            out.push(core.to_lowercase());
        }
        out.extend(chars[hi..].iter().map(|c| c.to_string()));
    }
    TokenSeq::from_surfaces(out)
}

pub fn detokenize(seq: &TokenSeq) -> String {
    seq.surfaces().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextInput {
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
}

impl TextInput {
    pub fn single(text_a: impl Into<String>) -> Self {
        TextInput {
            text_a: text_a.into(),
            text_b: None,
        }
    }

    pub fn pair(text_a: impl Into<String>, text_b: impl Into<String>) -> Self {
        TextInput {
            text_a: text_a.into(),
            text_b: Some(text_b.into()),
        }
    }

    pub fn side(&self, side: Side) -> Option<&str> {
        match side {
            Side::A => Some(&self.text_a),
            Side::B => self.text_b.as_deref(),
        }
    }
}

/// One side of a (possibly paired) input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "a",
            Side::B => "b",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub input: TextInput,
    pub gold_label: Option<usize>,
}

impl Example {
    pub fn new(id: impl Into<String>, input: TextInput, gold_label: Option<usize>) -> Self {
        Example {
            id: id.into(),
            input,
            gold_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Single,
    Pair,
}

impl TaskKind {
    /// The side destroyed by single-side transforms when none is requested.
    pub fn default_target(self) -> Side {
        match self {
            TaskKind::Single => Side::A,
            TaskKind::Pair => Side::B,
        }
    }

    pub fn sides(self) -> &'static [Side] {
        match self {
            TaskKind::Single => &[Side::A],
            TaskKind::Pair => &[Side::A, Side::B],
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(TaskKind::Single),
            "pair" => Ok(TaskKind::Pair),
            other => Err(Error::InvalidArgument(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
    default_label: Option<usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidArgument(
                "a label set needs at least two labels".into(),
            ));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate label `{n}`")));
            }
        }
        Ok(LabelSet {
            names,
            default_label: None,
        })
    }

    pub fn with_default(mut self, label: usize) -> Result<Self> {
        if label >= self.names.len() {
            return Err(Error::InvalidArgument(format!(
                "default label {label} out of range for {} classes",
                self.names.len()
            )));
        }
        self.default_label = Some(label);
        Ok(self)
    }

    pub fn with_default_name(self, name: &str) -> Result<Self> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown default label `{name}`")))?;
        self.with_default(idx)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }

    pub fn default_label(&self) -> Option<usize> {
        self.default_label
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.names.get(idx).map(String::as_str)
    }

    /// The same label set with an extra trailing `invalid` class.
    pub fn with_invalid_class(&self) -> LabelSet {
        let mut names = self.names.clone();
        let mut name = "invalid".to_string();
        while names.contains(&name) {
            name.push('_');
        }
        names.push(name);
        LabelSet {
            names,
            default_label: self.default_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub labels: LabelSet,
    pub task_kind: TaskKind,
}

impl Dataset {
    /// Validates shape, id uniqueness and label range.
    pub fn new(examples: Vec<Example>, labels: LabelSet, task_kind: TaskKind) -> Result<Self> {
        let mut ids = HashSet::new();
        for ex in &examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            if let Some(y) = ex.gold_label {
                if y >= labels.n_classes() {
                    return Err(Error::InvalidArgument(format!(
                        "example `{}` has label {y} outside [0, {})",
                        ex.id,
                        labels.n_classes()
                    )));
                }
            }
            if !shape_matches(&ex.input, task_kind) {
                return Err(Error::InvalidArgument(format!(
                    "example `{}` does not match task kind {task_kind:?}",
                    ex.id
                )));
            }
        }
        Ok(Dataset {
            examples,
            labels,
            task_kind,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// A dataset sharing labels and task kind but holding other examples.
    pub fn with_examples(&self, examples: Vec<Example>) -> Result<Dataset> {
        Dataset::new(examples, self.labels.clone(), self.task_kind)
    }

    /// Sorted word vocabulary over every side of every example.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for ex in &self.examples {
            for side in self.task_kind.sides() {
                if let Some(t) = ex.input.side(*side) {
                    set.extend(tokenize(t).surface_vec());
                }
            }
        }
        set.into_iter().collect()
    }
}

pub(crate) fn shape_matches(input: &TextInput, kind: TaskKind) -> bool {
    match kind {
        TaskKind::Single => input.text_b.is_none(),
        TaskKind::Pair => input.text_b.is_some(),
    }
}

/// Seeded random partition into `(rest, holdout)` with
/// `|holdout| = round(fraction * |ds|)`. Both parts keep the original order.
pub fn split_holdout(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let n = ds.len();
    let k = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_holdout = vec![false; n];
    for &i in &order[..k] {
        in_holdout[i] = true;
    }
    let (mut rest, mut hold) = (Vec::with_capacity(n - k), Vec::with_capacity(k));
    for (ex, h) in ds.examples.iter().zip(in_holdout) {
        if h {
            hold.push(ex.clone());
        } else {
            rest.push(ex.clone());
        }
    }
    Ok((ds.with_examples(rest)?, ds.with_examples(hold)?))
}
