//! Word error rate, context construction for the evaluation protocols, a
//! synthetic desk-scale corpus, and the experiment runner.

pub mod desk;
mod experiment;

use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{NgramCounts, Vocabulary};
use crate::error::{Error, Result};

pub use experiment::{
    grid_csv, run_experiment, Bench, BenchConfig, Condition, EvalReport, ExperimentConfig, Subset, UtteranceResult,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl WerStats {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.reference_length as f64
    }
}

impl std::ops::AddAssign for WerStats {
    fn add_assign(&mut self, rhs: Self) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.reference_length += rhs.reference_length;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// Minimal unit-cost alignment. Among equally cheap alignments the backtrace
/// prefers substitution (or match), then insertion, then deletion.
pub fn align<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i][j] = sub.min(d[i][j - 1] + 1).min(d[i - 1][j] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                ops.push(if same { EditOp::Match } else { EditOp::Substitute });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            ops.push(EditOp::Insert);
            j -= 1;
        } else {
            ops.push(EditOp::Delete);
            i -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn wer<A: AsRef<str>, B: AsRef<str>>(reference: &[A], hypothesis: &[B]) -> Result<WerStats> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut stats = WerStats {
        reference_length: reference.len(),
        ..Default::default()
    };
    for op in align(reference, hypothesis) {
        match op {
            EditOp::Match => {}
            EditOp::Substitute => stats.substitutions += 1,
            EditOp::Insert => stats.insertions += 1,
            EditOp::Delete => stats.deletions += 1,
        }
    }
    Ok(stats)
}

/// Reference words the hypothesis missed, as phrases of at most `max_phrase_len` words.
///
/// Adjacent substituted or deleted reference words form one run; long runs
/// are cut left to right. Duplicates keep their first occurrence.
pub fn extract_oracle_context<A: AsRef<str>, B: AsRef<str>>(
    reference: &[A],
    hypothesis: &[B],
    max_phrase_len: usize,
) -> Vec<String> {
    let max_len = max_phrase_len.max(1);
    let mut missed = vec![false; reference.len()];
    let mut i = 0;
    for op in align(reference, hypothesis) {
        match op {
            EditOp::Match => i += 1,
            EditOp::Substitute | EditOp::Delete => {
                missed[i] = true;
                i += 1;
            }
            EditOp::Insert => {}
        }
    }
    let mut phrases = Vec::new();
    let mut seen = HashSet::new();
    let mut start = 0;
    while start < reference.len() {
        if !missed[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < reference.len() && missed[end] {
            end += 1;
        }
        for chunk in reference[start..end].chunks(max_len) {
            let phrase = chunk.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
            if seen.insert(phrase.clone()) {
                phrases.push(phrase);
            }
        }
        start = end;
    }
    phrases
}

fn occurs_in(phrase: &[&str], transcript: &[String]) -> bool {
    transcript
        .windows(phrase.len())
        .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

/// Seeded uniform sample of `n` distinct 1-3 word phrases from `pool`, none of
/// which occurs contiguously in a protected transcript.
pub fn sample_distractors<S: AsRef<str>>(
    pool: &[S],
    protected: &[Vec<String>],
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut seen = HashSet::new();
    let eligible: Vec<String> = pool
        .iter()
        .filter_map(|p| {
            let words: Vec<&str> = p.as_ref().split_whitespace().collect();
            if words.is_empty() || words.len() > 3 || protected.iter().any(|t| occurs_in(&words, t)) {
                return None;
            }
            let phrase = words.join(" ");
            seen.insert(phrase.clone()).then_some(phrase)
        })
        .collect();
    if eligible.len() < n {
        return Err(Error::InsufficientPool {
            requested: n,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i].clone())
        .collect())
}

/// Seeded sample of `n` of the `pool_size` most frequent words, returned in frequency order.
pub fn top_common_words(
    counts: &NgramCounts,
    vocab: &Vocabulary,
    pool_size: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if pool_size > vocab.len() || n > pool_size {
        return Err(Error::Config(format!(
            "cannot draw {n} of the top {pool_size} words from a vocabulary of {}",
            vocab.len()
        )));
    }
    let mut ranked: Vec<u32> = (0..vocab.len() as u32).collect();
    ranked.sort_by(|&a, &b| counts.get(&[b]).cmp(&counts.get(&[a])).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool_size, n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| vocab.word(ranked[i]).to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, count_ngrams, sentences};

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn wer_hand_cases() {
        assert_eq!(wer(&w("a b c"), &w("a b c")).unwrap().wer(), 0.0);
        let s = wer(&w("a b c"), &w("a x c")).unwrap();
        assert_eq!((s.substitutions, s.insertions, s.deletions), (1, 0, 0));
        assert!((s.wer() - 1.0 / 3.0).abs() < 1e-15);
        let s = wer(&w("a b"), &w("a b c d")).unwrap();
        assert_eq!((s.insertions, s.wer()), (2, 1.0));
        let s = wer(&w("a b c"), &w("")).unwrap();
        assert_eq!(s.deletions, 3);
        assert!(matches!(wer::<&str, &str>(&[], &["a"]), Err(Error::EmptyReference)));
    }

    #[test]
    fn tie_break_prefers_substitution() {
        // "a b" vs "b c": one sub + one ... both 2-cost alignments; subs win.
        let s = wer(&w("a b"), &w("c d")).unwrap();
        assert_eq!((s.substitutions, s.insertions, s.deletions), (2, 0, 0));
        // ref "a", hyp "b a": insertion of b then match.
        assert_eq!(align(&w("a"), &w("b a")), vec![EditOp::Insert, EditOp::Match]);
    }

    #[test]
    fn oracle_context_cases() {
        assert_eq!(
            extract_oracle_context(&w("the world cup final"), &w("the word cut final"), 3),
            vec!["world cup"]
        );
        assert!(extract_oracle_context(&w("a b"), &w("a b"), 3).is_empty());
        assert_eq!(extract_oracle_context(&w("a b c d e"), &w("a"), 3), vec!["b c d", "e"]);
        assert_eq!(extract_oracle_context(&w("x a x b"), &w("y a y b"), 3), vec!["x"]);
    }

    #[test]
    fn distractor_cases() {
        let protected = vec![w("call bob now").iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        assert!(sample_distractors::<&str>(&[], &protected, 0, 1).unwrap().is_empty());
        match sample_distractors(&["bob", "call bob"], &protected, 1, 1) {
            Err(Error::InsufficientPool {
                requested: 1,
                available: 0,
            }) => {}
            other => panic!("{other:?}"),
        }
        let pool = ["alice", "bob now", "eve", "call alice", "a b c d", "now bob", "eve"];
        let a = sample_distractors(&pool, &protected, 3, 9).unwrap();
        assert_eq!(a, sample_distractors(&pool, &protected, 3, 9).unwrap());
        assert_eq!(a.len(), 3);
        for p in &a {
            assert!(["alice", "eve", "call alice", "now bob"].contains(&p.as_str()));
        }
        assert!(sample_distractors(&pool, &protected, 5, 9).is_err());
    }

    #[test]
    fn common_word_sampling() {
        let corpus = sentences("the the the a a cat");
        let v = build_vocab(&corpus, 10).unwrap();
        let c = count_ngrams(&corpus, &v, 1).unwrap();
        assert_eq!(top_common_words(&c, &v, 1, 1, 0).unwrap(), vec!["the"]);
        assert_eq!(top_common_words(&c, &v, 2, 2, 5).unwrap(), vec!["the", "a"]);
        assert!(top_common_words(&c, &v, 4, 1, 0).is_err());
        assert!(top_common_words(&c, &v, 2, 3, 0).is_err());
    }
}
