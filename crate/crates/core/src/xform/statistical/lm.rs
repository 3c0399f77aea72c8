//! Count-based n-gram model scored with stupid backoff.

use std::collections::HashMap;

use crate::corpus::TokenSeq;

pub const BOS: &str = "<s>";
pub const BACKOFF_ALPHA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    order: usize,
    /// n-gram counts for every n in 1..=order (BOS-padded contexts).
    counts: HashMap<Vec<String>, u64>,
    /// How often each (n-1)-gram occurs as a history; the empty history maps
    /// to the token total.
    history: HashMap<Vec<String>, u64>,
    vocab_size: usize,
}

impl LanguageModel {
    /// Trains on sentences padded with `order - 1` start markers. There is no
    /// end marker.
    pub fn train(sentences: &[TokenSeq], order: usize) -> LanguageModel {
        let order = order.max(1);
        let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
        for s in sentences {
            let mut padded: Vec<String> = vec![BOS.to_string(); order - 1];
            padded.extend(s.surface_vec());
            for end in (order - 1)..padded.len() {
                for n in 1..=order {
                    let gram = padded[end + 1 - n..=end].to_vec();
                    *counts.entry(gram).or_default() += 1;
                }
            }
        }
        LanguageModel::from_counts(counts, order)
    }

    pub fn from_counts(counts: HashMap<Vec<String>, u64>, order: usize) -> LanguageModel {
        let mut history: HashMap<Vec<String>, u64> = HashMap::new();
        let mut vocab_size = 0;
        for (gram, &c) in &counts {
            *history.entry(gram[..gram.len() - 1].to_vec()).or_default() += c;
            if gram.len() == 1 {
                vocab_size += 1;
            }
        }
        LanguageModel {
            order,
            counts,
            history,
            vocab_size,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn counts(&self) -> &HashMap<Vec<String>, u64> {
        &self.counts
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(&[word.to_string()][..])
    }

    /// Score floor for words never seen in training: `1 / (V + 1)`.
    pub fn unseen_floor(&self) -> f64 {
        1.0 / (self.vocab_size as f64 + 1.0)
    }

    /// Stupid-backoff score of `word` after `context` (only the last
    /// `order - 1` context words matter).
    pub fn score(&self, word: &str, context: &[String]) -> f64 {
        if !self.contains(word) {
            return self.unseen_floor();
        }
        let max_ctx = (self.order - 1).min(context.len());
        let mut weight = 1.0;
        for ctx_len in (0..=max_ctx).rev() {
            let ctx = &context[context.len() - ctx_len..];
            let mut gram = ctx.to_vec();
            gram.push(word.to_string());
            if let Some(&c) = self.counts.get(&gram) {
                let h = self.history[ctx];
                return weight * c as f64 / h as f64;
            }
            weight *= BACKOFF_ALPHA;
        }
        unreachable!("unigram of a known word always has a count")
    }

    /// `Σ ln score(wᵢ | BOS-padded prefix)`.
    pub fn log_score(&self, words: &[String]) -> f64 {
        let mut ctx: Vec<String> = vec![BOS.to_string(); self.order - 1];
        let mut total = 0.0;
        for w in words {
            total += self.score(w, &ctx).ln();
            ctx.push(w.clone());
        }
        total
    }

    pub fn start_context(&self) -> Vec<String> {
        vec![BOS.to_string(); self.order - 1]
    }
}
