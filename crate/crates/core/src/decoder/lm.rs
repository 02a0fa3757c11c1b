//! Count-based n-gram language model.
//!
//! Each order interpolates its maximum-likelihood estimate with the next lower order,
//! `p(w | h) = (c(h w) + a V p(w | h')) / (c(h) + a V)` with `a = 0.1`, bottoming out in the
//! uniform distribution over the vocabulary.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
const ALPHA: f64 = 0.1;

#[derive(Debug, Default, Clone, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    order: usize,
    vocab: HashMap<String, u32>,
    words: Vec<String>,
    /// counts[k] maps a k-word context to the counts of the words following it.
    counts: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

/// The last `order - 1` words emitted, padded with `<s>` at sentence start.
pub type LmState = Vec<u32>;

impl NgramLm {
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("language model order must be >= 1".into()));
        }
        let mut lm = NgramLm {
            order,
            vocab: HashMap::new(),
            words: Vec::new(),
            counts: vec![HashMap::new(); order],
        };
        for w in [BOS, EOS, UNK] {
            lm.intern(w);
        }
        let bos = lm.vocab[BOS];
        for sent in sentences {
            let mut seq: Vec<u32> = vec![bos; order - 1];
            seq.extend(sent.iter().map(|w| lm.intern(w.as_ref())));
            seq.push(lm.vocab[EOS]);
            for i in (order - 1)..seq.len() {
                let w = seq[i];
                for k in 0..order {
                    let ctx = seq[i - k..i].to_vec();
                    let c = lm.counts[k].entry(ctx).or_default();
                    c.total += 1;
                    *c.next.entry(w).or_default() += 1;
                }
            }
        }
        Ok(lm)
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.vocab.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.vocab.insert(w.to_string(), id);
        self.words.push(w.to_string());
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary size, `<s>` excluded (it is never predicted).
    pub fn vocab_size(&self) -> usize {
        self.words.len() - 1
    }

    /// Predictable vocabulary: everything except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str).filter(|w| *w != BOS)
    }

    pub fn id(&self, w: &str) -> u32 {
        self.vocab.get(w).copied().unwrap_or(self.vocab[UNK])
    }

    pub fn initial_state(&self) -> LmState {
        vec![self.vocab[BOS]; self.order - 1]
    }

    fn prob_ids(&self, ctx: &[u32], w: u32) -> f64 {
        let v = self.vocab_size() as f64;
        let mut p = 1.0 / v;
        for k in 0..self.order {
            let h = &ctx[ctx.len() - k..];
            if let Some(c) = self.counts[k].get(h) {
                let cw = c.next.get(&w).copied().unwrap_or(0) as f64;
                p = (cw + ALPHA * v * p) / (c.total as f64 + ALPHA * v);
            }
        }
        p
    }

    /// `p(word | context)`; only the last `order - 1` context words are used, and missing
    /// history is padded with `<s>`.
    pub fn prob<S: AsRef<str>>(&self, context: &[S], word: &str) -> f64 {
        let mut ctx = self.initial_state();
        ctx.extend(context.iter().map(|w| self.id(w.as_ref())));
        let keep = ctx.len() - (self.order - 1);
        self.prob_ids(&ctx[keep..], self.id(word))
    }

    /// Natural-log probability of `word` after `state`, and the successor state.
    pub fn score(&self, state: &[u32], word: &str) -> (f64, LmState) {
        let w = self.id(word);
        let lp = self.prob_ids(state, w).ln();
        let mut next = state.to_vec();
        if !next.is_empty() {
            next.remove(0);
            next.push(w);
        }
        (lp, next)
    }

    /// Log-probability of a complete sentence including `</s>`.
    pub fn sentence_logprob<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut state = self.initial_state();
        let mut total = 0.0;
        for w in words.iter().map(AsRef::as_ref).chain(std::iter::once(EOS)) {
            let (lp, next) = self.score(&state, w);
            total += lp;
            state = next;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn repeated_bigram_is_near_certain() {
        let corpus: Vec<Vec<&str>> = (0..100).map(|_| vec!["a", "b"]).collect();
        let lm = NgramLm::train(&corpus, 2).unwrap();
        assert!(lm.prob(&["a"], "b").ln() > 0.9f64.ln());
        // Count oracle: c(a b) = 100, c(a) = 100, V = 4 (a b </s> <unk>)
        let unigram_b = (100.0 + 0.1) / (300.0 + 0.1 * 4.0);
        let expected = (100.0 + 0.1 * 4.0 * unigram_b) / (100.0 + 0.1 * 4.0);
        assert!((lm.prob(&["a"], "b") - expected).abs() < 1e-12);
    }

    #[test]
    fn distributions_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = ["a", "b", "c", "d", "e"];
        let corpus: Vec<Vec<&str>> = (0..50)
            .map(|_| (0..rng.gen_range(1..8)).map(|_| words[rng.gen_range(0..5)]).collect())
            .collect();
        for order in 1..=3 {
            let lm = NgramLm::train(&corpus, order).unwrap();
            for _ in 0..100 {
                let ctx: Vec<&str> = (0..rng.gen_range(0..3)).map(|_| ["a", "b", "c", "d", "e", "zz", BOS][rng.gen_range(0..7)]).collect();
                let sum: f64 = lm.predictable().map(|w| lm.prob(&ctx, w)).sum();
                assert!((sum - 1.0).abs() < 1e-9, "order {order} ctx {ctx:?}: {sum}");
            }
        }
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let lm = NgramLm::train(&[vec!["a"]], 2).unwrap();
        assert_eq!(lm.prob(&["a"], "qq"), lm.prob(&["a"], UNK));
    }

    #[test]
    fn zero_order_rejected() {
        assert!(NgramLm::train(&[vec!["a"]], 0).is_err());
    }
}
