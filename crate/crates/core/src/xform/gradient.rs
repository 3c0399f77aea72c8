//! Saliency-guided edits: Drop, Repeat, Replace, CopyOne.
//!
//! Token importance is the first-order loss change `tᵢ·∇ₜᵢL`; the
//! least important `r` fraction of positions is edited.

use std::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TransformKind, TransformSpec, TransformedExample};
use crate::corpus::{detokenize, tokenize, Example, Side, TokenSeq};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyScores {
    pub scores: Vec<f64>,
    pub loss_label: usize,
}

impl SaliencyScores {
    pub fn new(scores: Vec<f64>, loss_label: usize) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite saliency score {bad}")));
        }
        Ok(SaliencyScores { scores, loss_label })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportancePartition {
    /// Least important positions, ascending.
    pub bottom: Vec<usize>,
    /// Most important positions, ascending; disjoint from `bottom`.
    pub top: Vec<usize>,
    pub r: f64,
    /// Length of the scored sequence.
    pub len: usize,
}

pub fn partition_by_importance(scores: &SaliencyScores, r: f64) -> Result<ImportancePartition> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty saliency scores".into()));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r = {r} outside (0, 1]")));
    }
    let k = ((r * n as f64).floor() as usize).clamp(1, n);
    let s = &scores.scores;

    let mut asc: Vec<usize> = (0..n).collect();
    asc.sort_by(|&i, &j| s[i].partial_cmp(&s[j]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let mut bottom: Vec<usize> = asc[..k].to_vec();

    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let mut top: Vec<usize> = desc
        .into_iter()
        .filter(|i| !bottom.contains(i))
        .take(k)
        .collect();

    bottom.sort_unstable();
    top.sort_unstable();
    Ok(ImportancePartition { bottom, top, r, len: n })
}

fn check_aligned(seq: &TokenSeq, part: &ImportancePartition) -> Result<()> {
    if seq.len() != part.len {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} tokens but sequence has {}",
            part.len,
            seq.len()
        )));
    }
    Ok(())
}

pub fn drop_tokens(seq: &TokenSeq, part: &ImportancePartition) -> Result<TokenSeq> {
    check_aligned(seq, part)?;
    let kept: Vec<&str> = seq
        .surfaces()
        .enumerate()
        .filter(|(i, _)| part.bottom.binary_search(i).is_err())
        .map(|(_, s)| s)
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateOutput("drop removed every token".into()));
    }
    Ok(TokenSeq::from_surfaces(kept))
}

/// Every bottom position takes the surface of a uniformly drawn top position.
pub fn repeat_tokens(seq: &TokenSeq, part: &ImportancePartition, seed: u64) -> Result<TokenSeq> {
    check_aligned(seq, part)?;
    if part.top.is_empty() {
        return Err(Error::UnsupportedTransform {
            kind: TransformKind::Repeat,
            reason: format!("no important tokens in a {}-token sequence", seq.len()),
        });
    }
    let pool: Vec<&str> = part.top.iter().map(|&i| seq.get(i).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(substitute(seq, &part.bottom, || pool[rng.gen_range(0..pool.len())]))
}

/// Every bottom position takes a uniform draw from `vocab`.
pub fn replace_tokens(
    seq: &TokenSeq,
    part: &ImportancePartition,
    vocab: &[String],
    seed: u64,
) -> Result<TokenSeq> {
    check_aligned(seq, part)?;
    if vocab.is_empty() {
        return Err(Error::InvalidArgument("empty replacement vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(substitute(seq, &part.bottom, || {
        vocab[rng.gen_range(0..vocab.len())].as_str()
    }))
}

fn substitute<'a>(
    seq: &'a TokenSeq,
    positions: &[usize],
    mut draw: impl FnMut() -> &'a str,
) -> TokenSeq {
    let mut out: Vec<&str> = seq.surfaces().collect();
    for &i in positions {
        out[i] = draw();
    }
    TokenSeq::from_surfaces(out)
}

/// Replaces text_b with the single highest-scoring token of text_a.
pub fn copy_one(
    ex: &Example,
    scores_a: &SaliencyScores,
    spec: &TransformSpec,
) -> Result<TransformedExample> {
    if ex.input.text_b.is_none() {
        return Err(Error::UnsupportedTransform {
            kind: TransformKind::CopyOne,
            reason: "single-input example".into(),
        });
    }
    let seq = tokenize(&ex.input.text_a);
    if seq.len() != scores_a.len() || seq.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "example `{}`: {} scores for {} tokens",
            ex.id,
            scores_a.len(),
            seq.len()
        )));
    }
    let best = scores_a
        .scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > scores_a.scores[best] { i } else { best });
    let mut spec = *spec;
    spec.target_side = Side::B;
    Ok(TransformedExample::replace_side(
        ex,
        Side::B,
        seq.get(best).unwrap().to_string(),
        spec,
    ))
}

/// Drop, Repeat or Replace on the spec's target side, using scores for that side.
pub fn edit_by_saliency(
    ex: &Example,
    scores: &SaliencyScores,
    vocab: &[String],
    spec: &TransformSpec,
) -> Result<TransformedExample> {
    let text = ex
        .input
        .side(spec.target_side)
        .ok_or_else(|| Error::UnsupportedTransform {
            kind: spec.kind,
            reason: format!("example `{}` has no side {}", ex.id, spec.target_side),
        })?;
    let seq = tokenize(text);
    if seq.is_empty() {
        return Err(Error::DegenerateInput(format!("example `{}`: empty side", ex.id)));
    }
    let part = partition_by_importance(scores, spec.r)?;
    let out = match spec.kind {
        TransformKind::Drop => drop_tokens(&seq, &part)?,
        TransformKind::Repeat => repeat_tokens(&seq, &part, spec.seed)?,
        TransformKind::Replace => replace_tokens(&seq, &part, vocab, spec.seed)?,
        other => {
            return Err(Error::InvalidArgument(format!("{other} is not a saliency edit")));
        }
    };
    Ok(TransformedExample::replace_side(
        ex,
        spec.target_side,
        detokenize(&out),
        *spec,
    ))
}
