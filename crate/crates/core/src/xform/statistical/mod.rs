//! Per-label phrase-based generators: Model 1 alignment, phrase extraction,
//! a trigram language model and a beam decoder, all trained on the examples
//! of a single label.

pub mod decoder;
pub mod lm;
pub mod model1;
pub mod phrases;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use decoder::{decode, decode_scored, translation_options, DecoderWeights, TranslationOption};
pub use lm::LanguageModel;
pub use model1::{align, train_model1_pairs, AlignmentModel, LexicalTable, Model1Fit};
pub use phrases::{extract_phrases, Phrase, PhraseEntry, PhrasePair, PhraseTable};

use super::{TransformKind, TransformSpec, TransformedExample};
use crate::corpus::{detokenize, tokenize, Dataset, Example, Side, TokenSeq};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_PAIRS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(TokenSeq, TokenSeq)>,
    pub label: usize,
}

/// Source/target halves of a single text: first `⌈n/2⌉` tokens, then the rest.
pub fn split_half(seq: &TokenSeq) -> (TokenSeq, TokenSeq) {
    let k = seq.len().div_ceil(2);
    let words = seq.surface_vec();
    (
        TokenSeq::from_surfaces(words[..k].to_vec()),
        TokenSeq::from_surfaces(words[k..].to_vec()),
    )
}

fn source_target(ex: &Example) -> (TokenSeq, TokenSeq) {
    match &ex.input.text_b {
        Some(b) => (tokenize(&ex.input.text_a), tokenize(b)),
        None => split_half(&tokenize(&ex.input.text_a)),
    }
}

pub fn build_parallel_corpus(ds: &Dataset, label: usize, min_pairs: usize) -> Result<ParallelCorpus> {
    let pairs: Vec<(TokenSeq, TokenSeq)> = ds
        .examples
        .iter()
        .filter(|e| e.gold_label == Some(label))
        .map(source_target)
        .filter(|(s, t)| !s.is_empty() && !t.is_empty())
        .collect();
    if pairs.len() < min_pairs.max(1) {
        return Err(Error::InsufficientData(format!(
            "label {label}: {} usable pairs, need {min_pairs}",
            pairs.len()
        )));
    }
    Ok(ParallelCorpus { pairs, label })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbsmtConfig {
    pub em_iterations: usize,
    pub max_phrase_len: usize,
    pub lm_order: usize,
    pub min_pairs: usize,
    pub weights: DecoderWeights,
}

impl Default for PbsmtConfig {
    fn default() -> Self {
        PbsmtConfig {
            em_iterations: 10,
            max_phrase_len: 3,
            lm_order: 3,
            min_pairs: DEFAULT_MIN_PAIRS,
            weights: DecoderWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbsmtModel {
    pub label: usize,
    pub lexical: LexicalTable,
    pub phrases: PhraseTable,
    pub lm: LanguageModel,
    pub config: PbsmtConfig,
}

impl PbsmtModel {
    pub fn train(corpus: &ParallelCorpus, config: PbsmtConfig) -> Result<PbsmtModel> {
        if corpus.pairs.is_empty() {
            return Err(Error::InsufficientData("empty parallel corpus".into()));
        }
        config.weights.validate()?;
        let aligner = AlignmentModel::train(&corpus.pairs, config.em_iterations);
        let extracted = corpus.pairs.iter().flat_map(|(s, t)| {
            let links = align(s, t, &aligner);
            extract_phrases(s, t, &links, config.max_phrase_len)
        });
        let phrases = PhraseTable::from_pairs(extracted.collect::<Vec<_>>());
        let targets: Vec<TokenSeq> = corpus.pairs.iter().map(|(_, t)| t.clone()).collect();
        let lm = LanguageModel::train(&targets, config.lm_order);
        Ok(PbsmtModel {
            label: corpus.label,
            lexical: aligner.forward,
            phrases,
            lm,
            config,
        })
    }

    pub fn generate(&self, source: &TokenSeq) -> Result<TokenSeq> {
        decode(
            source,
            &self.phrases,
            &self.lm,
            &self.config.weights,
            self.config.max_phrase_len,
        )
    }

    /// Writes `lex.tsv`, `phrases.tsv`, `lm.tsv` and `weights.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_lines(&dir.join("lex.tsv"), self.lexical.entries().map(|(s, t, p)| format!("{s}\t{t}\t{p}")))?;
        write_lines(
            &dir.join("phrases.tsv"),
            self.phrases.iter().map(|(s, e)| {
                format!("{}\t{}\t{}\t{}", s.join(" "), e.target.join(" "), e.logp_ts, e.logp_st)
            }),
        )?;
        let mut grams: Vec<(&Vec<String>, &u64)> = self.lm.counts().iter().collect();
        grams.sort();
        write_lines(
            &dir.join("lm.tsv"),
            grams.into_iter().map(|(g, c)| format!("{}\t{c}", g.join(" "))),
        )?;
        let meta = StoredMeta {
            label: self.label,
            config: self.config,
        };
        let path = dir.join("weights.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<PbsmtModel> {
        let path = dir.join("weights.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: StoredMeta = serde_json::from_str(&text)?;

        let lexical = LexicalTable::from_entries(
            read_fields(&dir.join("lex.tsv"), 3)?
                .into_iter()
                .map(|(line, f)| Ok((f[0].clone(), f[1].clone(), parse_num(&dir.join("lex.tsv"), line, &f[2])?)))
                .collect::<Result<Vec<_>>>()?,
        );
        let ppath = dir.join("phrases.tsv");
        let phrases = PhraseTable::from_entries(
            read_fields(&ppath, 4)?
                .into_iter()
                .map(|(line, f)| {
                    Ok((
                        split_words(&f[0]),
                        PhraseEntry {
                            target: split_words(&f[1]),
                            logp_ts: parse_num(&ppath, line, &f[2])?,
                            logp_st: parse_num(&ppath, line, &f[3])?,
                            count: 0,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()?,
        );
        let lpath = dir.join("lm.tsv");
        let mut counts = HashMap::new();
        for (line, f) in read_fields(&lpath, 2)? {
            counts.insert(split_words(&f[0]), parse_num::<u64>(&lpath, line, &f[1])?);
        }
        let lm = LanguageModel::from_counts(counts, meta.config.lm_order);
        Ok(PbsmtModel {
            label: meta.label,
            lexical,
            phrases,
            lm,
            config: meta.config,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoredMeta {
    label: usize,
    config: PbsmtConfig,
}

fn split_words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("bad number `{s}`"),
    })
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_fields(path: &Path, n: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {n} fields, got {}", fields.len()),
            });
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

/// Trained generators keyed by label.
#[derive(Debug, Clone, Default)]
pub struct PbsmtGenerators {
    models: BTreeMap<usize, PbsmtModel>,
}

impl PbsmtGenerators {
    /// Trains one generator per label; labels with too little data are
    /// skipped with a warning.
    pub fn train_all(ds: &Dataset, config: PbsmtConfig) -> Result<PbsmtGenerators> {
        let mut models = BTreeMap::new();
        for label in 0..ds.labels.n_classes() {
            match build_parallel_corpus(ds, label, config.min_pairs) {
                Ok(corpus) => {
                    models.insert(label, PbsmtModel::train(&corpus, config)?);
                }
                Err(Error::InsufficientData(msg)) => log::warn!("pbsmt: {msg}; skipped"),
                Err(e) => return Err(e),
            }
        }
        Ok(PbsmtGenerators { models })
    }

    pub fn insert(&mut self, model: PbsmtModel) {
        self.models.insert(model.label, model);
    }

    pub fn get(&self, label: usize) -> Option<&PbsmtModel> {
        self.models.get(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.models.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Saves each model to `root/label-<idx>/`.
    pub fn save(&self, root: &Path) -> Result<()> {
        for (label, m) in &self.models {
            m.save(&root.join(format!("label-{label}")))?;
        }
        Ok(())
    }

    /// Loads every `label-*` subdirectory of `root`.
    pub fn load(root: &Path) -> Result<PbsmtGenerators> {
        let mut gens = PbsmtGenerators::default();
        let rd = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut dirs: Vec<_> = rd
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_dir()
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("label-"))
            })
            .collect();
        dirs.sort();
        for d in dirs {
            gens.insert(PbsmtModel::load(&d)?);
        }
        Ok(gens)
    }
}

/// Regenerates the label-bearing half of an example with the generator of
/// its gold label: text_b from text_a for pairs, the second half from the
/// first half for single texts.
pub fn generate_invalid(
    ex: &Example,
    gens: &PbsmtGenerators,
    spec: &TransformSpec,
) -> Result<TransformedExample> {
    let label = ex.gold_label.ok_or_else(|| Error::UnsupportedTransform {
        kind: TransformKind::Pbsmt,
        reason: format!("example `{}` has no gold label", ex.id),
    })?;
    let model = gens.get(label).ok_or_else(|| Error::UnsupportedTransform {
        kind: TransformKind::Pbsmt,
        reason: format!("no generator trained for label {label}"),
    })?;
    let mut spec = *spec;
    match ex.input.text_b {
        Some(_) => {
            let out = model.generate(&tokenize(&ex.input.text_a))?;
            spec.target_side = Side::B;
            Ok(TransformedExample::replace_side(ex, Side::B, detokenize(&out), spec))
        }
        None => {
            let (first, _) = split_half(&tokenize(&ex.input.text_a));
            let out = model.generate(&first)?;
            let joined = TokenSeq::from_surfaces(first.surface_vec().into_iter().chain(out.surface_vec()));
            spec.target_side = Side::A;
            Ok(TransformedExample::replace_side(ex, Side::A, detokenize(&joined), spec))
        }
    }
}
