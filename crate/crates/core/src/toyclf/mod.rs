//! Mean-pooled bag-of-embeddings classifier with analytic gradients.
//!
//! Each side of the input is mean-pooled over its token embeddings, the
//! pooled sides are concatenated, and a linear head produces logits that are
//! divided by the temperature before the softmax. Pooling ignores token
//! order, and sums run over token ids in sorted order, so permuting a side
//! leaves every output bit-identical.

mod loss;
mod store;
mod train;

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, Example, Side, TaskKind};
use crate::error::{Error, Result};
use crate::xform::gradient::SaliencyScores;

pub use loss::{grad, loss, Batch, EntropySign, Gradients, LossConfig, LossKind};
pub use train::{fit_temperature, nll_at_temperature, train, train_entropic, TrainConfig};

pub const UNK: &str = "<unk>";
pub const DEFAULT_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    n_classes: usize,
    sides: usize,
    /// `V × dim`, row-major.
    pub emb: Vec<f64>,
    /// `(sides·dim) × n_classes`, row-major.
    pub head: Vec<f64>,
    pub bias: Vec<f64>,
    temperature: f64,
}

/// Token ids of each side, in text order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub sides: Vec<Vec<usize>>,
}

pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|z| z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z / temperature - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl ToyModel {
    /// Fresh parameters. `vocab` must not contain [`UNK`]; it is added at row 0.
    pub fn new(
        vocab: Vec<String>,
        dim: usize,
        n_classes: usize,
        task: TaskKind,
        seed: u64,
    ) -> Result<ToyModel> {
        if dim == 0 || n_classes < 2 {
            return Err(Error::InvalidArgument(
                "toy model needs dim >= 1 and at least two classes".into(),
            ));
        }
        let mut full = vec![UNK.to_string()];
        full.extend(vocab.into_iter().filter(|w| w != UNK));
        let sides = task.sides().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = (0..full.len() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = 1.0 / ((sides * dim) as f64).sqrt();
        let head = (0..sides * dim * n_classes)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Ok(ToyModel::from_parts(
            full,
            dim,
            n_classes,
            sides,
            emb,
            head,
            vec![0.0; n_classes],
            1.0,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        vocab: Vec<String>,
        dim: usize,
        n_classes: usize,
        sides: usize,
        emb: Vec<f64>,
        head: Vec<f64>,
        bias: Vec<f64>,
        temperature: f64,
    ) -> ToyModel {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        ToyModel {
            vocab,
            index,
            dim,
            n_classes,
            sides,
            emb,
            head,
            bias,
            temperature,
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Vocabulary without the unknown-word row.
    pub fn words(&self) -> Vec<String> {
        self.vocab.iter().filter(|w| *w != UNK).cloned().collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn task_kind(&self) -> TaskKind {
        if self.sides == 2 {
            TaskKind::Pair
        } else {
            TaskKind::Single
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature {t} must be positive")));
        }
        self.temperature = t;
        Ok(())
    }

    pub fn token_id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        &self.emb[id * self.dim..(id + 1) * self.dim]
    }

    /// Same parameters with an extra class whose head column and bias start at zero.
    pub fn with_extra_class(&self) -> ToyModel {
        let n = self.n_classes;
        let rows = self.sides * self.dim;
        let mut head = Vec::with_capacity(rows * (n + 1));
        for r in 0..rows {
            head.extend_from_slice(&self.head[r * n..(r + 1) * n]);
            head.push(0.0);
        }
        let mut bias = self.bias.clone();
        bias.push(0.0);
        ToyModel::from_parts(
            self.vocab.clone(),
            self.dim,
            n + 1,
            self.sides,
            self.emb.clone(),
            head,
            bias,
            self.temperature,
        )
    }

    pub fn encode(&self, ex: &Example) -> Result<Encoded> {
        let mut sides = Vec::with_capacity(self.sides);
        for side in self.task_kind().sides() {
            let text = ex.input.side(*side).ok_or_else(|| {
                Error::DegenerateInput(format!("example `{}` lacks side {side}", ex.id))
            })?;
            let ids: Vec<usize> = tokenize(text).surfaces().map(|w| self.token_id(w)).collect();
            if ids.is_empty() {
                return Err(Error::DegenerateInput(format!(
                    "example `{}`: side {side} has no tokens",
                    ex.id
                )));
            }
            sides.push(ids);
        }
        Ok(Encoded { sides })
    }

    /// Concatenated per-side mean embeddings.
    pub fn pooled(&self, enc: &Encoded) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.sides * d];
        for (s, ids) in enc.sides.iter().enumerate() {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            let acc = &mut out[s * d..(s + 1) * d];
            for id in sorted {
                for (a, e) in acc.iter_mut().zip(self.embedding(id)) {
                    *a += e;
                }
            }
            let n = ids.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        out
    }

    /// Unscaled logits `Wᵀ·pooled + b`.
    pub fn logits(&self, enc: &Encoded) -> Vec<f64> {
        let pooled = self.pooled(enc);
        let n = self.n_classes;
        let mut z = self.bias.clone();
        for (r, p) in pooled.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += self.head[r * n + c] * p;
            }
        }
        z
    }

    pub fn probs_encoded(&self, enc: &Encoded) -> Vec<f64> {
        softmax(&self.logits(enc), self.temperature)
    }

    pub fn forward(&self, ex: &Example) -> Result<Vec<f64>> {
        Ok(self.probs_encoded(&self.encode(ex)?))
    }

    /// Per-token `tᵢ·∇ₜᵢL` for the cross-entropy loss against `loss_label`,
    /// aligned with `tokenize` of `side`.
    pub fn saliency(&self, ex: &Example, loss_label: usize, side: Side) -> Result<SaliencyScores> {
        if loss_label >= self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "loss label {loss_label} out of range"
            )));
        }
        let side_idx = match (side, self.sides) {
            (Side::A, _) => 0,
            (Side::B, 2) => 1,
            (Side::B, _) => {
                return Err(Error::InvalidArgument("single-input model has no side b".into()))
            }
        };
        let enc = self.encode(ex)?;
        let batch_item = [(enc, loss_label)];
        let g = grad(
            self,
            &Batch {
                clean: &batch_item,
                invalid: &[],
            },
            &LossConfig::cross_entropy(),
        )?;
        let ids = &batch_item[0].0.sides[side_idx];
        let token_grads = &g.tokens[0][side_idx];
        let scores = ids
            .iter()
            .zip(token_grads)
            .map(|(&id, tg)| self.embedding(id).iter().zip(tg).map(|(e, g)| e * g).sum())
            .collect();
        SaliencyScores::new(scores, loss_label)
    }
}

pub use store::{load_model, save_model};
