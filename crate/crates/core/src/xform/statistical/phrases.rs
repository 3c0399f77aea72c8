//! Consistent phrase-pair extraction and the relative-frequency phrase table.

use std::collections::BTreeMap;

use crate::corpus::TokenSeq;

pub type Phrase = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhrasePair {
    pub source: Phrase,
    pub target: Phrase,
}

/// All phrase pairs with at most `max_len` tokens per side that contain at
/// least one link and have no link crossing the span boundary.
pub fn extract_phrases(
    source: &TokenSeq,
    target: &TokenSeq,
    alignment: &[(usize, usize)],
    max_len: usize,
) -> Vec<PhrasePair> {
    let src = source.surface_vec();
    let tgt = target.surface_vec();
    let mut out = Vec::new();
    if alignment.is_empty() {
        return out;
    }
    for i1 in 0..src.len() {
        for i2 in i1..src.len().min(i1 + max_len) {
            for j1 in 0..tgt.len() {
                for j2 in j1..tgt.len().min(j1 + max_len) {
                    let mut inside = false;
                    let mut consistent = true;
                    for &(i, j) in alignment {
                        let in_src = (i1..=i2).contains(&i);
                        let in_tgt = (j1..=j2).contains(&j);
                        if in_src != in_tgt {
                            consistent = false;
                            break;
                        }
                        inside |= in_src;
                    }
                    if consistent && inside {
                        out.push(PhrasePair {
                            source: src[i1..=i2].to_vec(),
                            target: tgt[j1..=j2].to_vec(),
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEntry {
    pub target: Phrase,
    /// `ln p(target | source)`
    pub logp_ts: f64,
    /// `ln p(source | target)`
    pub logp_st: f64,
    /// Extraction count; zero when loaded from disk.
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Phrase, Vec<PhraseEntry>>,
}

impl PhraseTable {
    pub fn from_pairs<I: IntoIterator<Item = PhrasePair>>(pairs: I) -> PhraseTable {
        let mut joint: BTreeMap<(Phrase, Phrase), u64> = BTreeMap::new();
        let mut src_count: BTreeMap<Phrase, u64> = BTreeMap::new();
        let mut tgt_count: BTreeMap<Phrase, u64> = BTreeMap::new();
        for p in pairs {
            *src_count.entry(p.source.clone()).or_default() += 1;
            *tgt_count.entry(p.target.clone()).or_default() += 1;
            *joint.entry((p.source, p.target)).or_default() += 1;
        }
        let mut entries: BTreeMap<Phrase, Vec<PhraseEntry>> = BTreeMap::new();
        for ((s, t), c) in joint {
            let logp_ts = (c as f64 / src_count[&s] as f64).ln();
            let logp_st = (c as f64 / tgt_count[&t] as f64).ln();
            entries.entry(s).or_default().push(PhraseEntry {
                target: t,
                logp_ts,
                logp_st,
                count: c,
            });
        }
        PhraseTable { entries }
    }

    pub fn from_entries<I: IntoIterator<Item = (Phrase, PhraseEntry)>>(it: I) -> PhraseTable {
        let mut entries: BTreeMap<Phrase, Vec<PhraseEntry>> = BTreeMap::new();
        for (s, e) in it {
            entries.entry(s).or_default().push(e);
        }
        for v in entries.values_mut() {
            v.sort_by(|a, b| a.target.cmp(&b.target));
        }
        PhraseTable { entries }
    }

    pub fn lookup(&self, source: &[String]) -> &[PhraseEntry] {
        self.entries.get(source).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Phrase, &PhraseEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, v)| v.iter().map(move |e| (s, e)))
    }

    /// Number of distinct source phrases.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every target-side word.
    pub fn target_vocabulary(&self) -> std::collections::BTreeSet<&str> {
        self.iter()
            .flat_map(|(_, e)| e.target.iter().map(String::as_str))
            .collect()
    }
}
