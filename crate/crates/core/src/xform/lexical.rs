//! Bag-of-words preserving reorderings: Sort, Reverse, Shuffle, CopySort.
//!
//! A trailing `.`, `!` or `?` stays in final position in every output.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TransformKind, TransformSpec, TransformedExample};
use crate::corpus::{detokenize, tokenize, Example, Side, TokenSeq};
use crate::error::{Error, Result};

/// Content tokens up to this length fall back to exhaustive search when
/// random shuffling fails to find a bigram-free order.
const EXHAUSTIVE_SHUFFLE_MAX: usize = 8;

pub fn is_terminal_punct(s: &str) -> bool {
    matches!(s, "." | "!" | "?")
}

fn split_terminal(seq: &TokenSeq) -> (Vec<&str>, Option<&str>) {
    let surfaces: Vec<&str> = seq.surfaces().collect();
    match surfaces.split_last() {
        Some((last, rest)) if is_terminal_punct(last) => (rest.to_vec(), Some(*last)),
        _ => (surfaces, None),
    }
}

fn rebuild(content: Vec<&str>, terminal: Option<&str>) -> TokenSeq {
    TokenSeq::from_surfaces(content.into_iter().chain(terminal))
}

fn require_non_empty(seq: &TokenSeq, what: &str) -> Result<()> {
    if seq.is_empty() {
        Err(Error::DegenerateInput(format!("{what}: empty token sequence")))
    } else {
        Ok(())
    }
}

/// Stable lexicographic sort on casefolded surfaces.
pub fn sort_tokens(seq: &TokenSeq) -> Result<TokenSeq> {
    require_non_empty(seq, "sort")?;
    let (mut content, terminal) = split_terminal(seq);
    content.sort_by_cached_key(|s| s.to_lowercase());
    Ok(rebuild(content, terminal))
}

pub fn reverse_tokens(seq: &TokenSeq) -> Result<TokenSeq> {
    require_non_empty(seq, "reverse")?;
    let (mut content, terminal) = split_terminal(seq);
    content.reverse();
    Ok(rebuild(content, terminal))
}

fn bigram_set(tokens: &[&str]) -> HashSet<(String, String)> {
    tokens
        .windows(2)
        .map(|w| (w[0].to_string(), w[1].to_string()))
        .collect()
}

fn count_shared(original: &HashSet<(String, String)>, tokens: &[&str]) -> usize {
    tokens
        .windows(2)
        .filter(|w| original.contains(&(w[0].to_string(), w[1].to_string())))
        .count()
}

/// Number of ordered bigram positions in `candidate` that also occur as a
/// bigram of `original`.
pub fn shared_bigrams(original: &TokenSeq, candidate: &TokenSeq) -> usize {
    let orig: Vec<&str> = original.surfaces().collect();
    let cand: Vec<&str> = candidate.surfaces().collect();
    count_shared(&bigram_set(&orig), &cand)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleOutcome {
    pub seq: TokenSeq,
    pub shared_bigrams: usize,
    pub attempts: usize,
    /// Set when no bigram-free order was found.
    pub best_effort: bool,
}

/// Seeded shuffle, redrawn until no bigram of the input survives.
pub fn shuffle_tokens(seq: &TokenSeq, seed: u64, max_attempts: usize) -> Result<ShuffleOutcome> {
    let (content, terminal) = split_terminal(seq);
    if content.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "shuffle needs at least two content tokens, got {}",
            content.len()
        )));
    }
    let all: Vec<&str> = seq.surfaces().collect();
    let original = bigram_set(&all);
    let score = |order: &[&str]| {
        let mut full = order.to_vec();
        full.extend(terminal);
        count_shared(&original, &full)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec<&str>)> = None;
    let mut attempts = 0;
    while attempts < max_attempts.max(1) {
        attempts += 1;
        let mut draw = content.clone();
        draw.shuffle(&mut rng);
        let shared = score(&draw);
        if best.as_ref().map_or(true, |(s, _)| shared < *s) {
            best = Some((shared, draw));
        }
        if shared == 0 {
            break;
        }
    }
    let (mut shared, mut order) = best.expect("at least one attempt");

    if shared > 0 && content.len() <= EXHAUSTIVE_SHUFFLE_MAX {
        if let Some((s, o)) = exhaustive_min(&content, &score) {
            if s < shared {
                shared = s;
                order = o;
            }
        }
    }
    if shared > 0 {
        log::debug!("shuffle: best effort with {shared} shared bigram(s) after {attempts} attempts");
    }
    Ok(ShuffleOutcome {
        seq: rebuild(order, terminal),
        shared_bigrams: shared,
        attempts,
        best_effort: shared > 0,
    })
}

/// Walks permutations in lexicographic index order, stopping at the first
/// with zero shared bigrams.
fn exhaustive_min<'a>(
    content: &[&'a str],
    score: &dyn Fn(&[&'a str]) -> usize,
) -> Option<(usize, Vec<&'a str>)> {
    let mut idx: Vec<usize> = (0..content.len()).collect();
    let mut best: Option<(usize, Vec<&str>)> = None;
    loop {
        let order: Vec<&str> = idx.iter().map(|&i| content[i]).collect();
        let s = score(&order);
        if best.as_ref().map_or(true, |(b, _)| s < *b) {
            best = Some((s, order));
            if s == 0 {
                break;
            }
        }
        if !next_permutation(&mut idx) {
            break;
        }
    }
    best
}

pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn target_text<'a>(ex: &'a Example, side: Side, kind: TransformKind) -> Result<&'a str> {
    ex.input.side(side).ok_or_else(|| Error::UnsupportedTransform {
        kind,
        reason: format!("example `{}` has no side {side}", ex.id),
    })
}

/// Applies Sort, Reverse or Shuffle to the spec's target side.
pub fn reorder(ex: &Example, spec: &TransformSpec) -> Result<TransformedExample> {
    let seq = tokenize(target_text(ex, spec.target_side, spec.kind)?);
    let out = match spec.kind {
        TransformKind::Sort => sort_tokens(&seq)?,
        TransformKind::Reverse => reverse_tokens(&seq)?,
        TransformKind::Shuffle => shuffle_tokens(&seq, spec.seed, spec.max_shuffle_attempts)?.seq,
        other => {
            return Err(Error::InvalidArgument(format!("{other} is not a reordering")));
        }
    };
    Ok(TransformedExample::replace_side(
        ex,
        spec.target_side,
        detokenize(&out),
        *spec,
    ))
}

/// Replaces text_b with the sorted tokens of text_a.
pub fn copy_sort(ex: &Example, spec: &TransformSpec) -> Result<TransformedExample> {
    if ex.input.text_b.is_none() {
        return Err(Error::UnsupportedTransform {
            kind: TransformKind::CopySort,
            reason: "single-input example".into(),
        });
    }
    let sorted = sort_tokens(&tokenize(&ex.input.text_a))?;
    let mut spec = *spec;
    spec.target_side = Side::B;
    Ok(TransformedExample::replace_side(
        ex,
        Side::B,
        detokenize(&sorted),
        spec,
    ))
}
