//! The statistical generator: EM likelihood never falls, the decoder finds
//! the best derivation a brute-force enumeration finds, and outputs draw
//! only on the phrase table and the source.

use std::collections::{BTreeSet, HashSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saladbench::corpus::TokenSeq;
use saladbench::xform::statistical::{
    build_parallel_corpus, decode_scored, train_model1_pairs, DecoderWeights, LanguageModel, PhraseEntry,
    PhraseTable, DEFAULT_MIN_PAIRS,
};

use crate::fixtures::{Corpus, Toy};
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "statistical generator",
    budget: Some(Duration::from_secs(60)),
    uses_corpora: true,
    run,
};

const EM_ITERATIONS: usize = 10;
/// Allowed fall in log-likelihood between EM iterations, relative to its
/// magnitude; absorbs summation rounding only.
const LL_SLACK: f64 = 1e-12;
const N_DECODER_FIXTURES: usize = 300;
const MAX_SOURCE_LEN: usize = 5;
const MAX_ENTRIES: usize = 20;
const MAX_PHRASE_LEN: usize = 3;
const SCORE_TOL: f64 = 1e-9;
const EXACT_BEAM: usize = 1_000_000;
const PASS_THROUGH_LOGP: f64 = -10.0;
const SRC_WORDS: [&str; 4] = ["a", "b", "c", "d"];
const TGT_WORDS: [&str; 4] = ["w", "x", "y", "z"];

/// Log-likelihood must be non-decreasing in both directions for every label.
fn check_em(c: &Corpus) -> Result<usize, String> {
    let ds = &c.data.train;
    let mut runs = 0;
    for label in 0..ds.labels.n_classes() {
        let corpus = match build_parallel_corpus(ds, label, DEFAULT_MIN_PAIRS) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let sides: Vec<(Vec<String>, Vec<String>)> =
            corpus.pairs.iter().map(|(s, t)| (s.surface_vec(), t.surface_vec())).collect();
        for forward in [true, false] {
            let pairs: Vec<(&[String], &[String])> = sides
                .iter()
                .map(|(s, t)| if forward { (&s[..], &t[..]) } else { (&t[..], &s[..]) })
                .collect();
            let fit = train_model1_pairs(&pairs, EM_ITERATIONS);
            let ll = &fit.log_likelihood;
            if ll.len() != EM_ITERATIONS + 1 {
                return Err(format!("label {label}: {} likelihood values", ll.len()));
            }
            for (i, w) in ll.windows(2).enumerate() {
                if w[1] < w[0] - LL_SLACK * w[0].abs() {
                    return Err(format!(
                        "label {label} {}: iteration {i} likelihood {} -> {}",
                        if forward { "forward" } else { "backward" },
                        w[0],
                        w[1]
                    ));
                }
            }
            runs += 1;
        }
    }
    Ok(runs)
}

/// Every generated token is a phrase-table target word or a source word.
fn check_vocabulary(c: &Corpus) -> Result<usize, String> {
    let ds = &c.data.eval;
    let mut checked = 0;
    for label in c.generators.labels() {
        let model = c.generators.get(label).expect("listed label");
        let allowed: BTreeSet<&str> = model.phrases.target_vocabulary();
        let corpus = match build_parallel_corpus(ds, label, 1) {
            Ok(p) => p,
            Err(_) => continue,
        };
        for (source, _) in &corpus.pairs {
            let out = model.generate(source).map_err(|e| e.to_string())?;
            let src: HashSet<&str> = source.surfaces().collect();
            if let Some(w) = out.surfaces().find(|w| !allowed.contains(w) && !src.contains(w)) {
                return Err(format!("label {label}: `{w}` from nowhere in {:?}", out.surface_vec()));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

struct Choice {
    start: usize,
    end: usize,
    target: Vec<String>,
    logp: f64,
}

struct Fixture {
    source: Vec<String>,
    entries: Vec<(Vec<String>, Vec<String>, f64)>,
    lm: LanguageModel,
    weights: DecoderWeights,
}

fn pick(rng: &mut ChaCha8Rng, from: &[&str], len: usize) -> Vec<String> {
    (0..len).map(|_| from[rng.gen_range(0..from.len())].to_string()).collect()
}

fn random_fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let n = rng.gen_range(1..=MAX_SOURCE_LEN);
    let source = pick(rng, &SRC_WORDS, n);
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for _ in 0..rng.gen_range(0..=MAX_ENTRIES) {
        // Half the entries are spans of the source, so they fire.
        let src = if rng.gen_bool(0.5) {
            let s = rng.gen_range(0..source.len());
            let e = (s + rng.gen_range(1..=MAX_PHRASE_LEN)).min(source.len());
            source[s..e].to_vec()
        } else {
            let len = rng.gen_range(1..=MAX_PHRASE_LEN);
            pick(rng, &SRC_WORDS, len)
        };
        let len = rng.gen_range(1..=MAX_PHRASE_LEN);
        let tgt = pick(rng, &TGT_WORDS, len);
        if seen.insert((src.clone(), tgt.clone())) {
            entries.push((src, tgt, -rng.gen_range(0.0..3.0)));
        }
    }
    let sentences: Vec<TokenSeq> = (0..rng.gen_range(1..6))
        .map(|_| {
            let len = rng.gen_range(1..6);
            TokenSeq::from_surfaces(pick(rng, &TGT_WORDS[..3], len))
        })
        .collect();
    let lm = LanguageModel::train(&sentences, rng.gen_range(2..=3));
    let weights = DecoderWeights {
        w_tm: rng.gen_range(0.1..2.0),
        w_lm: rng.gen_range(0.1..2.0),
        w_dist: -rng.gen_range(0.0..1.0),
        w_len: rng.gen_range(-0.5..0.5),
        beam_size: EXACT_BEAM,
        distortion_limit: rng.gen_range(0..=3),
    };
    Fixture {
        source,
        entries,
        lm,
        weights,
    }
}

fn options(f: &Fixture) -> Vec<Choice> {
    let n = f.source.len();
    let mut out = Vec::new();
    for start in 0..n {
        for end in start + 1..=(start + MAX_PHRASE_LEN).min(n) {
            for (src, tgt, lp) in &f.entries {
                if src[..] == f.source[start..end] {
                    out.push(Choice {
                        start,
                        end,
                        target: tgt.clone(),
                        logp: *lp,
                    });
                }
            }
        }
        if !f.entries.iter().any(|(src, _, _)| src[..] == f.source[start..start + 1]) {
            out.push(Choice {
                start,
                end: start + 1,
                target: vec![f.source[start].clone()],
                logp: PASS_THROUGH_LOGP,
            });
        }
    }
    out
}

/// Every complete derivation whose jumps stay within `limit`, as
/// `(output, tm + distortion + length part of the score)`.
fn derivations(f: &Fixture, opts: &[Choice], limit: usize) -> Vec<(Vec<String>, f64)> {
    fn walk(
        opts: &[Choice],
        w: &DecoderWeights,
        limit: usize,
        covered: &mut Vec<bool>,
        last_end: usize,
        output: &mut Vec<String>,
        partial: f64,
        out: &mut Vec<(Vec<String>, f64)>,
    ) {
        if covered.iter().all(|&c| c) {
            out.push((output.clone(), partial));
            return;
        }
        for o in opts {
            let jump = o.start.abs_diff(last_end);
            if jump > limit || covered[o.start..o.end].iter().any(|&c| c) {
                continue;
            }
            covered[o.start..o.end].iter_mut().for_each(|c| *c = true);
            let mark = output.len();
            output.extend(o.target.iter().cloned());
            let step = w.w_tm * o.logp + w.w_dist * jump as f64 + w.w_len * o.target.len() as f64;
            walk(opts, w, limit, covered, o.end, output, partial + step, out);
            output.truncate(mark);
            covered[o.start..o.end].iter_mut().for_each(|c| *c = false);
        }
    }
    let mut out = Vec::new();
    let mut covered = vec![false; f.source.len()];
    walk(opts, &f.weights, limit, &mut covered, 0, &mut Vec::new(), 0.0, &mut out);
    out
}

/// Best `(output, score)`; ties to the lexicographically smaller output.
fn brute_force(f: &Fixture) -> (Vec<String>, f64, Vec<(Vec<String>, f64)>) {
    let opts = options(f);
    let mut all = derivations(f, &opts, f.weights.distortion_limit);
    if all.is_empty() {
        all = derivations(f, &opts, 0);
    }
    let scored: Vec<(Vec<String>, f64)> = all
        .into_iter()
        .map(|(o, part)| {
            let s = part + f.weights.w_lm * f.lm.log_score(&o);
            (o, s)
        })
        .collect();
    let best = scored
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then_with(|| b.0.cmp(&a.0)))
        .expect("monotone derivation exists")
        .clone();
    (best.0, best.1, scored)
}

fn table_of(f: &Fixture) -> PhraseTable {
    PhraseTable::from_entries(f.entries.iter().map(|(s, t, lp)| {
        (
            s.clone(),
            PhraseEntry {
                target: t.clone(),
                logp_ts: *lp,
                logp_st: 0.0,
                count: 1,
            },
        )
    }))
}

/// `(exact matches, near-tie matches, default-beam agreements)`.
fn check_decoder() -> Result<(usize, usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0de);
    let (mut exact, mut tied, mut default_agree) = (0, 0, 0);
    for i in 0..N_DECODER_FIXTURES {
        let f = random_fixture(&mut rng);
        let table = table_of(&f);
        let src = TokenSeq::from_surfaces(f.source.iter().cloned());
        let (got, got_score) =
            decode_scored(&src, &table, &f.lm, &f.weights, MAX_PHRASE_LEN).map_err(|e| e.to_string())?;
        let (best, best_score, scored) = brute_force(&f);
        if (got_score - best_score).abs() > SCORE_TOL {
            return Err(format!(
                "fixture {i}: decoder {got:?} scores {got_score}, enumeration finds {best:?} at {best_score}"
            ));
        }
        if got == best {
            exact += 1;
        } else if scored.iter().any(|(o, s)| *o == got && (s - best_score).abs() <= SCORE_TOL) {
            tied += 1;
        } else {
            return Err(format!("fixture {i}: decoder output {got:?} is not an optimal derivation ({best:?})"));
        }
        let small = DecoderWeights {
            beam_size: DecoderWeights::default().beam_size,
            ..f.weights
        };
        let (small_out, _) =
            decode_scored(&src, &table, &f.lm, &small, MAX_PHRASE_LEN).map_err(|e| e.to_string())?;
        default_agree += usize::from(small_out == got);
    }
    Ok((exact, tied, default_agree))
}

fn run(toy: &Toy) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for c in toy.corpora() {
        match check_em(c).and_then(|runs| check_vocabulary(c).map(|v| (runs, v))) {
            Ok((runs, v)) => details.push(format!(
                "{}: {runs} EM runs non-decreasing, {v} outputs within vocabulary",
                c.name()
            )),
            Err(e) => {
                pass = false;
                details.push(format!("{}: {e}", c.name()));
            }
        }
    }
    match check_decoder() {
        Ok((exact, tied, agree)) => details.push(format!(
            "decoder optimal on {N_DECODER_FIXTURES} fixtures ({exact} exact, {tied} near ties); default beam agrees on {agree}"
        )),
        Err(e) => {
            pass = false;
            details.push(e);
        }
    }
    Verdict::new(pass, details.join("; "))
}
