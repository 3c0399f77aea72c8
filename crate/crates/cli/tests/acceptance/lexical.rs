//! Lexical reorderings on seeded random inputs, checked against
//! permutation and bigram oracles written here.

use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saladbench::corpus::{detokenize, tokenize, TokenSeq};
use saladbench::xform::lexical::{reverse_tokens, shuffle_tokens, sort_tokens};
use saladbench::xform::DEFAULT_SHUFFLE_ATTEMPTS;

use crate::fixtures::Toy;
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "lexical reorderings",
    budget: Some(Duration::from_secs(10)),
    uses_corpora: false,
    run,
};

pub const FIGURE_ONE: Criterion = Criterion {
    name: "sort of the worked example",
    budget: None,
    uses_corpora: false,
    run: figure_one,
};

const N_INPUTS: usize = 1000;
/// Content lengths up to this are checked against every permutation.
const ORACLE_MAX_LEN: usize = 7;
const WORDS: [&str; 8] = ["a", "b", "the", "cat", "sat", "on", "mat", "zebra"];
const TERMINALS: [&str; 3] = [".", "!", "?"];

fn multiset(words: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for w in words {
        *m.entry(w.as_str()).or_default() += 1;
    }
    m
}

/// Positions of `candidate` whose adjacent pair is adjacent somewhere in
/// `original`.
fn oracle_shared(original: &[String], candidate: &[String]) -> usize {
    let pairs: HashSet<(&str, &str)> = original.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    candidate
        .windows(2)
        .filter(|w| pairs.contains(&(w[0].as_str(), w[1].as_str())))
        .count()
}

/// Heap's algorithm over `content`; true if any order, with `terminal`
/// appended, shares no bigram with `original`.
fn bigram_free_order_exists(original: &[String], content: &[String], terminal: Option<&String>) -> bool {
    let mut a = content.to_vec();
    let n = a.len();
    let mut c = vec![0usize; n];
    let test = |a: &[String]| {
        let mut full = a.to_vec();
        full.extend(terminal.cloned());
        oracle_shared(original, &full) == 0
    };
    if test(&a) {
        return true;
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            if test(&a) {
                return true;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    false
}

fn random_input(rng: &mut ChaCha8Rng) -> Vec<String> {
    let vocab = rng.gen_range(2..=WORDS.len());
    let len = rng.gen_range(1..=12);
    let mut words: Vec<String> = (0..len).map(|_| WORDS[rng.gen_range(0..vocab)].to_string()).collect();
    if rng.gen_bool(0.5) {
        words.push(TERMINALS[rng.gen_range(0..TERMINALS.len())].to_string());
    }
    words
}

fn split(words: &[String]) -> (&[String], Option<&String>) {
    match words.split_last() {
        Some((last, rest)) if TERMINALS.contains(&last.as_str()) => (rest, Some(last)),
        _ => (words, None),
    }
}

fn check_one(words: &[String], seed: u64, stats: &mut Stats) -> Result<(), String> {
    let seq = TokenSeq::from_surfaces(words.iter().cloned());
    let (content, terminal) = split(words);
    let want = multiset(words);

    let sorted = sort_tokens(&seq).map_err(|e| e.to_string())?.surface_vec();
    let mut expect: Vec<String> = content.to_vec();
    expect.sort();
    expect.extend(terminal.cloned());
    if sorted != expect {
        return Err(format!("sort {words:?} gave {sorted:?}"));
    }

    let reversed = reverse_tokens(&seq).map_err(|e| e.to_string())?.surface_vec();
    let mut expect: Vec<String> = content.iter().rev().cloned().collect();
    expect.extend(terminal.cloned());
    if reversed != expect {
        return Err(format!("reverse {words:?} gave {reversed:?}"));
    }

    let shuffled = shuffle_tokens(&seq, seed, DEFAULT_SHUFFLE_ATTEMPTS);
    if content.len() < 2 {
        return match shuffled {
            Err(_) => Ok(()),
            Ok(o) => Err(format!("shuffle accepted {words:?} and gave {:?}", o.seq.surface_vec())),
        };
    }
    let out = shuffled.map_err(|e| e.to_string())?;
    let got = out.seq.surface_vec();
    if multiset(&got) != want {
        return Err(format!("shuffle {words:?} changed the multiset: {got:?}"));
    }
    if let Some(t) = terminal {
        if got.last() != Some(t) {
            return Err(format!("shuffle {words:?} moved the terminal: {got:?}"));
        }
    }
    let shared = oracle_shared(words, &got);
    if shared != out.shared_bigrams {
        return Err(format!("shuffle {words:?} reports {} shared, oracle {shared}", out.shared_bigrams));
    }
    if content.len() <= ORACLE_MAX_LEN {
        stats.oracle_checked += 1;
        let possible = bigram_free_order_exists(words, content, terminal);
        if possible && shared != 0 {
            return Err(format!("shuffle {words:?} left {shared} shared bigrams though a bigram-free order exists"));
        }
        if !possible {
            stats.impossible += 1;
            if !out.best_effort {
                return Err(format!("shuffle {words:?} did not flag best effort"));
            }
        }
    } else if shared > 0 {
        stats.long_best_effort += 1;
    }
    Ok(())
}

#[derive(Default)]
struct Stats {
    oracle_checked: usize,
    impossible: usize,
    long_best_effort: usize,
}

fn run(_: &Toy) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a1ad);
    let mut stats = Stats::default();
    for i in 0..N_INPUTS {
        let words = random_input(&mut rng);
        if let Err(msg) = check_one(&words, i as u64, &mut stats) {
            return Verdict::new(false, format!("input {i}: {msg}"));
        }
    }
    Verdict::new(
        true,
        format!(
            "{N_INPUTS} inputs; {} shuffles checked against all orders ({} had none bigram-free); {} long inputs best effort",
            stats.oracle_checked, stats.impossible, stats.long_best_effort
        ),
    )
}

const FIGURE_INPUT: &str = "Making certain distinctions is imperative in looking back on the past.";
const FIGURE_SORTED: &str = "back certain distinctions imperative in is looking making on past the .";

fn figure_one(_: &Toy) -> Verdict {
    match sort_tokens(&tokenize(FIGURE_INPUT)) {
        Ok(seq) => {
            let got = detokenize(&seq);
            Verdict::new(got == FIGURE_SORTED, format!("`{got}`"))
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}
