//! IBM Model 1 lexical translation tables and intersected alignments.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::TokenSeq;

pub const NULL_TOKEN: &str = "<null>";

/// `t(target | source)`; every stored source distribution sums to one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalTable {
    probs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl LexicalTable {
    pub fn prob(&self, target: &str, source: &str) -> f64 {
        self.probs
            .get(source)
            .and_then(|d| d.get(target))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn distribution(&self, source: &str) -> Option<&BTreeMap<String, f64>> {
        self.probs.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }

    /// `(source, target, prob)` triples in sorted order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.probs
            .iter()
            .flat_map(|(s, d)| d.iter().map(move |(t, p)| (s.as_str(), t.as_str(), *p)))
    }

    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, String, f64)>,
    {
        let mut probs: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (s, t, p) in entries {
            probs.entry(s).or_default().insert(t, p);
        }
        LexicalTable { probs }
    }
}

#[derive(Debug, Clone)]
pub struct Model1Fit {
    pub table: LexicalTable,
    /// Corpus log-likelihood before each iteration, plus after the last one.
    pub log_likelihood: Vec<f64>,
}

struct Interned {
    src_words: Vec<String>,
    tgt_words: Vec<String>,
    /// Source ids include the null word at index 0.
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

fn intern(pairs: &[(&[String], &[String])]) -> Interned {
    let mut src_ids: HashMap<&str, usize> = HashMap::new();
    let mut tgt_ids: HashMap<&str, usize> = HashMap::new();
    let mut src_words = vec![NULL_TOKEN.to_string()];
    let mut tgt_words = Vec::new();
    src_ids.insert(NULL_TOKEN, 0);
    let mut out = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        let mut si = vec![0];
        for w in s.iter() {
            let id = *src_ids.entry(w.as_str()).or_insert_with(|| {
                src_words.push(w.clone());
                src_words.len() - 1
            });
            si.push(id);
        }
        let ti = t
            .iter()
            .map(|w| {
                *tgt_ids.entry(w.as_str()).or_insert_with(|| {
                    tgt_words.push(w.clone());
                    tgt_words.len() - 1
                })
            })
            .collect();
        out.push((si, ti));
    }
    Interned {
        src_words,
        tgt_words,
        pairs: out,
    }
}

/// EM with a null source word and uniform initialisation.
pub fn train_model1_pairs(pairs: &[(&[String], &[String])], iterations: usize) -> Model1Fit {
    let data = intern(pairs);
    let uniform = if data.tgt_words.is_empty() {
        0.0
    } else {
        1.0 / data.tgt_words.len() as f64
    };
    let mut t: HashMap<(usize, usize), f64> = HashMap::new();
    for (s, tg) in &data.pairs {
        for &e in s {
            for &f in tg {
                t.insert((e, f), uniform);
            }
        }
    }

    let log_likelihood_of = |t: &HashMap<(usize, usize), f64>| -> f64 {
        data.pairs
            .iter()
            .map(|(s, tg)| {
                let l = s.len() as f64;
                tg.iter()
                    .map(|&f| (s.iter().map(|&e| t[&(e, f)]).sum::<f64>() / l).ln())
                    .sum::<f64>()
            })
            .sum()
    };

    let mut ll = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        ll.push(log_likelihood_of(&t));
        let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
        let mut totals = vec![0.0; data.src_words.len()];
        for (s, tg) in &data.pairs {
            for &f in tg {
                let denom: f64 = s.iter().map(|&e| t[&(e, f)]).sum();
                for &e in s {
                    let c = t[&(e, f)] / denom;
                    *counts.entry((e, f)).or_insert(0.0) += c;
                    totals[e] += c;
                }
            }
        }
        for ((e, f), c) in counts {
            t.insert((e, f), c / totals[e]);
        }
    }
    ll.push(log_likelihood_of(&t));

    if iterations == 0 {
        // normalise the uniform start over co-occurring targets
        let mut totals = vec![0.0; data.src_words.len()];
        for ((e, _), p) in &t {
            totals[*e] += p;
        }
        for ((e, _), p) in t.iter_mut() {
            *p /= totals[*e];
        }
    }

    let table = LexicalTable::from_entries(t.into_iter().map(|((e, f), p)| {
        (data.src_words[e].clone(), data.tgt_words[f].clone(), p)
    }));
    Model1Fit {
        table,
        log_likelihood: ll,
    }
}

/// Forward `t(tgt|src)` and reverse `t(src|tgt)` tables for symmetrised alignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentModel {
    pub forward: LexicalTable,
    pub reverse: LexicalTable,
}

impl AlignmentModel {
    pub fn train(pairs: &[(TokenSeq, TokenSeq)], iterations: usize) -> AlignmentModel {
        let owned: Vec<(Vec<String>, Vec<String>)> = pairs
            .iter()
            .map(|(s, t)| (s.surface_vec(), t.surface_vec()))
            .collect();
        let fwd: Vec<(&[String], &[String])> =
            owned.iter().map(|(s, t)| (s.as_slice(), t.as_slice())).collect();
        let rev: Vec<(&[String], &[String])> =
            owned.iter().map(|(s, t)| (t.as_slice(), s.as_slice())).collect();
        AlignmentModel {
            forward: train_model1_pairs(&fwd, iterations).table,
            reverse: train_model1_pairs(&rev, iterations).table,
        }
    }
}

/// For each word on the "to" side, the best linked position on the "from"
/// side, or `None` when the null word wins outright. Ties go to the lowest
/// real position.
fn directional(table: &LexicalTable, from: &[&str], to: &[&str]) -> Vec<Option<usize>> {
    to.iter()
        .map(|w| {
            let null_p = table.prob(w, NULL_TOKEN);
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in from.iter().enumerate() {
                let p = table.prob(w, s);
                if best.map_or(true, |(_, b)| p > b) {
                    best = Some((i, p));
                }
            }
            match best {
                Some((i, p)) if p > 0.0 && p >= null_p => Some(i),
                _ => None,
            }
        })
        .collect()
}

/// Intersection of the two directional argmax alignments, as sorted
/// `(source, target)` links.
pub fn align(source: &TokenSeq, target: &TokenSeq, model: &AlignmentModel) -> Vec<(usize, usize)> {
    let src: Vec<&str> = source.surfaces().collect();
    let tgt: Vec<&str> = target.surfaces().collect();
    let t2s = directional(&model.forward, &src, &tgt);
    let s2t = directional(&model.reverse, &tgt, &src);
    let mut links: Vec<(usize, usize)> = t2s
        .iter()
        .enumerate()
        .filter_map(|(j, i)| i.map(|i| (i, j)))
        .filter(|&(i, j)| s2t[i] == Some(j))
        .collect();
    links.sort_unstable();
    links
}
