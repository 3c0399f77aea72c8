//! Stack decoder over source coverage with bounded reordering.
//!
//! Hypotheses that agree on coverage, last covered position and language
//! model context are recombined, so with a beam at least as large as the
//! number of live states the search is exact.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lm::LanguageModel;
use super::phrases::PhraseTable;
use crate::corpus::TokenSeq;
use crate::error::{Error, Result};

/// Translation-model log-probability charged to a source word copied through
/// because the phrase table has no entry for it.
pub const PASS_THROUGH_LOGP: f64 = -10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderWeights {
    pub w_tm: f64,
    pub w_lm: f64,
    /// Multiplies the total jump distance; negative values penalise reordering.
    pub w_dist: f64,
    /// Multiplies output length.
    pub w_len: f64,
    pub beam_size: usize,
    pub distortion_limit: usize,
}

impl Default for DecoderWeights {
    fn default() -> Self {
        DecoderWeights {
            w_tm: 1.0,
            w_lm: 0.5,
            w_dist: -0.3,
            w_len: -0.1,
            beam_size: 10,
            distortion_limit: 3,
        }
    }
}

impl DecoderWeights {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidArgument("beam size must be at least 1".into()));
        }
        for (name, v) in [
            ("w_tm", self.w_tm),
            ("w_lm", self.w_lm),
            ("w_dist", self.w_dist),
            ("w_len", self.w_len),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// One way to translate the source span `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationOption {
    pub start: usize,
    pub end: usize,
    pub target: Vec<String>,
    pub logp_ts: f64,
}

/// Every phrase-table match over the source, plus a pass-through option for
/// each single word the table does not cover.
pub fn translation_options(
    source: &[String],
    table: &PhraseTable,
    max_len: usize,
) -> Vec<TranslationOption> {
    let mut out = Vec::new();
    for start in 0..source.len() {
        for end in (start + 1)..=source.len().min(start + max_len) {
            for e in table.lookup(&source[start..end]) {
                out.push(TranslationOption {
                    start,
                    end,
                    target: e.target.clone(),
                    logp_ts: e.logp_ts,
                });
            }
        }
        if table.lookup(&source[start..start + 1]).is_empty() {
            out.push(TranslationOption {
                start,
                end: start + 1,
                target: vec![source[start].clone()],
                logp_ts: PASS_THROUGH_LOGP,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Hyp {
    covered: Vec<bool>,
    last_end: usize,
    context: Vec<String>,
    output: Vec<String>,
    score: f64,
}

type StateKey = (Vec<bool>, usize, Vec<String>);

/// Higher score first; equal scores ordered by output string.
fn better(a: &Hyp, b: &Hyp) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.output.cmp(&b.output))
}

fn insert(stack: &mut BTreeMap<StateKey, Hyp>, h: Hyp) {
    let key = (h.covered.clone(), h.last_end, h.context.clone());
    match stack.get(&key) {
        Some(old) if better(old, &h) != Ordering::Greater => {}
        _ => {
            stack.insert(key, h);
        }
    }
}

fn search(
    source: &[String],
    options: &[TranslationOption],
    lm: &LanguageModel,
    w: &DecoderWeights,
    distortion_limit: usize,
) -> Option<Hyp> {
    let n = source.len();
    let ctx_len = lm.order().saturating_sub(1);
    let mut stacks: Vec<BTreeMap<StateKey, Hyp>> = vec![BTreeMap::new(); n + 1];
    insert(
        &mut stacks[0],
        Hyp {
            covered: vec![false; n],
            last_end: 0,
            context: lm.start_context(),
            output: Vec::new(),
            score: 0.0,
        },
    );
    for k in 0..n {
        let mut hyps: Vec<Hyp> = std::mem::take(&mut stacks[k]).into_values().collect();
        hyps.sort_by(better);
        hyps.truncate(w.beam_size);
        for h in &hyps {
            for opt in options {
                if opt.start.abs_diff(h.last_end) > distortion_limit
                    || h.covered[opt.start..opt.end].iter().any(|&c| c)
                {
                    continue;
                }
                let mut context = h.context.clone();
                let mut lm_score = 0.0;
                for word in &opt.target {
                    lm_score += lm.score(word, &context).ln();
                    context.push(word.clone());
                }
                let drop = context.len().saturating_sub(ctx_len);
                context.drain(..drop);
                let jump = opt.start.abs_diff(h.last_end) as f64;
                let mut covered = h.covered.clone();
                covered[opt.start..opt.end].iter_mut().for_each(|c| *c = true);
                let mut output = h.output.clone();
                output.extend(opt.target.iter().cloned());
                let score = h.score
                    + w.w_tm * opt.logp_ts
                    + w.w_lm * lm_score
                    + w.w_dist * jump
                    + w.w_len * opt.target.len() as f64;
                let k2 = k + (opt.end - opt.start);
                insert(
                    &mut stacks[k2],
                    Hyp {
                        covered,
                        last_end: opt.end,
                        context,
                        output,
                        score,
                    },
                );
            }
        }
    }
    let mut finals: Vec<Hyp> = std::mem::take(&mut stacks[n]).into_values().collect();
    finals.sort_by(better);
    finals.into_iter().next()
}

/// Best-scoring target sequence for `source`.
pub fn decode(
    source: &TokenSeq,
    table: &PhraseTable,
    lm: &LanguageModel,
    weights: &DecoderWeights,
    max_phrase_len: usize,
) -> Result<TokenSeq> {
    Ok(TokenSeq::from_surfaces(
        decode_scored(source, table, lm, weights, max_phrase_len)?.0,
    ))
}

/// As [`decode`], also returning the model score of the chosen output.
pub fn decode_scored(
    source: &TokenSeq,
    table: &PhraseTable,
    lm: &LanguageModel,
    weights: &DecoderWeights,
    max_phrase_len: usize,
) -> Result<(Vec<String>, f64)> {
    if source.is_empty() {
        return Err(Error::DegenerateInput("cannot decode an empty source".into()));
    }
    weights.validate()?;
    let src = source.surface_vec();
    let options = translation_options(&src, table, max_phrase_len.max(1));
    let best = search(&src, &options, lm, weights, weights.distortion_limit)
        .or_else(|| {
            log::debug!("beam exhausted by dead ends; decoding monotonically");
            search(&src, &options, lm, weights, 0)
        })
        .expect("monotone decoding always completes");
    Ok((best.output, best.score))
}
