//! Back-off n-gram language model with interpolated Witten-Bell smoothing.
//!
//! All scores are natural-log probabilities. Base-10 only appears inside ARPA
//! files (see [`arpa`]).
//!
//! Interpolated Witten-Bell has an exact back-off form: for a history `h` with
//! `c(h)` follower tokens of `t(h)` distinct types,
//!
//! ```text
//! P(w|h) = (c(h,w) + t(h) * P(w|h')) / (c(h) + t(h))     if c(h,w) > 0
//! P(w|h) = bow(h) * P(w|h'),  bow(h) = t(h) / (c(h) + t(h))  otherwise
//! ```
//!
//! and the unigram level interpolates with a uniform distribution over every
//! predictable id (all words, `<unk>` and `</s>`), so zero-count words keep
//! non-zero mass.

pub mod arpa;

use std::collections::HashMap;
use std::sync::Arc;

use crate::corpus::{NgramCounts, Vocabulary};
use crate::error::{Error, Result};

pub use arpa::{read_arpa, write_arpa};

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub order: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { order: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub logprob: f64,
    pub backoff: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    vocab: Arc<Vocabulary>,
    /// `entries[k - 1]` holds the k-grams.
    entries: Vec<HashMap<Box<[u32]>, Entry>>,
}

#[derive(Default)]
struct ContextStats {
    total: u64,
    types: u64,
}

/// Estimate an interpolated Witten-Bell model from counts.
pub fn train_lm(counts: &NgramCounts, vocab: Arc<Vocabulary>, config: LmConfig) -> Result<NgramModel> {
    if config.order == 0 || config.order > MAX_ORDER {
        return Err(Error::Config(format!(
            "order must be in 1..={MAX_ORDER}, got {}",
            config.order
        )));
    }
    if counts.order() != config.order {
        return Err(Error::Config(format!(
            "counts have order {} but model order is {}",
            counts.order(),
            config.order
        )));
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("no n-gram counts".into()));
    }
    let bos = vocab.bos_id();
    let num_ids = vocab.num_ids();

    // Bucket counts by order, dropping anything that predicts <s>.
    let mut by_order: Vec<Vec<(&[u32], u64)>> = vec![Vec::new(); config.order];
    for (gram, c) in counts.iter() {
        if c == 0 || *gram.last().unwrap() == bos {
            continue;
        }
        if gram.iter().any(|&id| id as usize >= num_ids) {
            return Err(Error::Integrity(format!(
                "n-gram id outside vocabulary of {num_ids} ids"
            )));
        }
        by_order[gram.len() - 1].push((gram, c));
    }
    for grams in &mut by_order {
        grams.sort_unstable();
    }

    let mut entries: Vec<HashMap<Box<[u32]>, Entry>> = Vec::with_capacity(config.order);

    // Unigrams: interpolate with uniform over the predictable ids.
    let predictable = (num_ids - 1) as f64;
    let uni_total: u64 = by_order[0].iter().map(|(_, c)| c).sum();
    let uni_types = by_order[0].len() as f64;
    let denom = uni_total as f64 + uni_types;
    let mut unigrams = HashMap::with_capacity(num_ids);
    for id in 0..num_ids as u32 {
        let p = if id == bos {
            0.0
        } else {
            (counts.get(&[id]) as f64 + uni_types / predictable) / denom
        };
        unigrams.insert(
            vec![id].into_boxed_slice(),
            Entry {
                logprob: p.ln(),
                backoff: None,
            },
        );
    }
    entries.push(unigrams);

    for k in 2..=config.order {
        let mut stats: HashMap<&[u32], ContextStats> = HashMap::new();
        for &(gram, c) in &by_order[k - 1] {
            let s = stats.entry(&gram[..k - 1]).or_default();
            s.total += c;
            s.types += 1;
        }
        let mut level = HashMap::with_capacity(by_order[k - 1].len());
        for &(gram, c) in &by_order[k - 1] {
            let s = &stats[&gram[..k - 1]];
            let lower = lower_prob(&entries, &gram[1..]);
            let p = (c as f64 + s.types as f64 * lower) / (s.total + s.types) as f64;
            level.insert(
                gram.to_vec().into_boxed_slice(),
                Entry {
                    logprob: p.ln(),
                    backoff: None,
                },
            );
        }
        // Back-off weights live on the (k-1)-gram entries that act as histories.
        for (hist, s) in stats {
            let bow = (s.types as f64 / (s.total + s.types) as f64).ln();
            match entries[k - 2].get_mut(hist) {
                Some(e) => e.backoff = Some(bow),
                None => {
                    return Err(Error::Integrity(format!(
                        "history {hist:?} has followers but no entry of its own"
                    )))
                }
            }
        }
        entries.push(level);
    }

    Ok(NgramModel {
        order: config.order,
        vocab,
        entries,
    })
}

/// Probability of `gram`'s last token given its prefix under the already built lower orders.
fn lower_prob(entries: &[HashMap<Box<[u32]>, Entry>], gram: &[u32]) -> f64 {
    score_in(entries, &gram[..gram.len() - 1], gram[gram.len() - 1]).exp()
}

fn score_in(entries: &[HashMap<Box<[u32]>, Entry>], history: &[u32], word: u32) -> f64 {
    let max_hist = entries.len() - 1;
    let h = &history[history.len().saturating_sub(max_hist)..];
    let mut buf = [0u32; MAX_ORDER];
    let mut acc = 0.0;
    for start in 0..=h.len() {
        let ctx = &h[start..];
        let n = ctx.len();
        buf[..n].copy_from_slice(ctx);
        buf[n] = word;
        if let Some(e) = entries[n].get(&buf[..=n]) {
            return acc + e.logprob;
        }
        if n > 0 {
            if let Some(bow) = entries[n - 1].get(ctx).and_then(|e| e.backoff) {
                acc += bow;
            }
        }
    }
    // Every predictable id has a unigram; reaching here means the id is out of range.
    f64::NEG_INFINITY
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Swap in a vocabulary with the same word list, e.g. one carrying training counts.
    pub fn with_vocab(mut self, vocab: Arc<Vocabulary>) -> Result<Self> {
        if vocab.checksum() != self.vocab.checksum() {
            return Err(Error::Integrity(format!(
                "language model uses vocabulary {}, got {}",
                self.vocab.checksum(),
                vocab.checksum()
            )));
        }
        self.vocab = vocab;
        Ok(self)
    }

    /// Natural-log `P(word | history)`; only the last `order - 1` history ids are used.
    pub fn score(&self, history: &[u32], word: u32) -> f64 {
        debug_assert!((word as usize) < self.vocab.num_ids());
        score_in(&self.entries, history, word)
    }

    /// Total log-probability of a sentence, framed by `<s>` and closed with `</s>`.
    pub fn sequence_logprob(&self, tokens: &[u32]) -> f64 {
        let mut history = Vec::with_capacity(tokens.len() + 1);
        history.push(self.vocab.bos_id());
        let mut total = 0.0;
        for &t in tokens {
            total += self.score(&history, t);
            history.push(t);
        }
        total + self.score(&history, self.vocab.eos_id())
    }

    /// Number of stored n-grams per order.
    pub fn ngram_counts(&self) -> Vec<usize> {
        self.entries.iter().map(HashMap::len).collect()
    }

    /// Whether `history` (at most `order - 1` ids) is a stored context with a back-off weight.
    pub fn has_context(&self, history: &[u32]) -> bool {
        !history.is_empty()
            && history.len() < self.order
            && self.entries[history.len() - 1]
                .get(history)
                .is_some_and(|e| e.backoff.is_some())
    }

    pub(crate) fn entries(&self) -> &[HashMap<Box<[u32]>, Entry>] {
        &self.entries
    }

    pub(crate) fn from_parts(order: usize, vocab: Arc<Vocabulary>, entries: Vec<HashMap<Box<[u32]>, Entry>>) -> Self {
        Self { order, vocab, entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, count_ngrams, sentences};

    fn model(text: &str, order: usize) -> NgramModel {
        let corpus = sentences(text);
        let vocab = Arc::new(build_vocab(&corpus, 100).unwrap());
        let counts = count_ngrams(&corpus, &vocab, order).unwrap();
        train_lm(&counts, vocab, LmConfig { order }).unwrap()
    }

    fn mass(m: &NgramModel, history: &[u32]) -> f64 {
        (0..m.vocab().num_ids() as u32).map(|w| m.score(history, w).exp()).sum()
    }

    #[test]
    fn order_mismatch_is_config_error() {
        let corpus = sentences("a b");
        let vocab = Arc::new(build_vocab(&corpus, 10).unwrap());
        let counts = count_ngrams(&corpus, &vocab, 2).unwrap();
        assert!(matches!(
            train_lm(&counts, vocab, LmConfig { order: 3 }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn witten_bell_by_hand() {
        // "a b / a b": history a has c=2, t=1 so P(b|a) = (2 + P1(b)) / 3.
        let m = model("a b\na b", 2);
        let v = m.vocab().clone();
        let (a, b) = (v.id("a"), v.id("b"));
        // Unigram: N = 6 (a,b,</s> twice), T = 3, 4 predictable ids (a, b, unk, </s>).
        let p1_b: f64 = (2.0 + 3.0 / 4.0) / 9.0;
        let p1_a = p1_b;
        assert!((m.score(&[], b) - p1_b.ln()).abs() < 1e-12);
        assert!((m.score(&[a], b) - ((2.0 + p1_b) / 3.0).ln()).abs() < 1e-12);
        assert!((m.score(&[a], a) - (p1_a / 3.0).ln()).abs() < 1e-12);
        assert!(m.score(&[a], b) > m.score(&[a], a));
    }

    #[test]
    fn degenerate_single_word_corpus_normalizes() {
        let m = model("a", 1);
        let v = m.vocab();
        let total = m.score(&[], v.id("a")).exp() + m.score(&[], v.unk_id()).exp() + m.score(&[], v.eos_id()).exp();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(m.score(&[], v.bos_id()), f64::NEG_INFINITY);
    }

    #[test]
    fn seen_bigram_beats_unseen() {
        let m = model("the cat sat\nthe dog sat", 2);
        let v = m.vocab();
        let (cat, sat, dog) = (v.id("cat"), v.id("sat"), v.id("dog"));
        assert!(m.score(&[cat], sat) > m.score(&[cat], dog));
    }

    #[test]
    fn normalizes_for_seen_and_unseen_histories() {
        let m = model("the cat sat\nthe dog sat\na cat ran home\nthe dog ran", 3);
        let v = m.vocab().clone();
        let histories = [
            vec![],
            vec![v.bos_id()],
            vec![v.bos_id(), v.id("the")],
            vec![v.id("the"), v.id("dog")],
            vec![v.id("sat"), v.id("the")],
            vec![v.unk_id(), v.unk_id()],
            vec![v.eos_id()],
        ];
        for h in &histories {
            assert!((mass(&m, h) - 1.0).abs() < 1e-9, "history {h:?}");
        }
    }

    #[test]
    fn empty_history_is_unigram() {
        let m = model("x y z\nx", 3);
        let x = m.vocab().id("x");
        let e = m.entries()[0].get(&[x][..]).unwrap();
        assert_eq!(m.score(&[], x), e.logprob);
    }

    #[test]
    fn sequence_logprob_definition() {
        let m = model("the cat sat\nthe dog sat", 3);
        let v = m.vocab();
        let (bos, eos) = (v.bos_id(), v.eos_id());
        assert_eq!(m.sequence_logprob(&[]), m.score(&[bos], eos));
        let w = v.id("cat");
        assert_eq!(m.sequence_logprob(&[w]), m.score(&[bos], w) + m.score(&[bos, w], eos));
        // Appending a token lowers the running (unterminated) total.
        let tokens = [v.id("the"), v.id("cat"), v.id("sat"), v.id("dog")];
        let mut history = vec![bos];
        let mut running = 0.0;
        for &t in &tokens {
            let next = running + m.score(&history, t);
            assert!(next < running);
            running = next;
            history.push(t);
        }
    }
}
