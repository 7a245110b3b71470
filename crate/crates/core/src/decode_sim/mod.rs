//! Simulated recognition channel: confusion lattices built from reference
//! transcripts, context arc injection, and beam decoding.
//!
//! Each reference word becomes a slot holding the word itself plus its `K`
//! nearest vocabulary words by character edit distance, scored
//! `-gamma * distance`. Rare words are sometimes removed from their own slot,
//! and words outside the vocabulary are never present, so only context
//! injection can bring them back.

mod beam;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bias::{ContextSet, PHRASE_JOINER};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub use beam::{beam_decode, Hypothesis, TraceStep};

/// Character-level Levenshtein distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Nearest-neighbour confusers per slot (`K`).
    pub confusers: usize,
    /// Acoustic weight per unit of edit distance.
    pub gamma: f64,
    /// Probability of removing a rare reference word from its own slot.
    pub truth_drop: f64,
    /// Words with a training count at or below this are eligible for dropping.
    pub rare_max_count: u64,
    /// Largest edit distance at which context entries are injected.
    pub d_max: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            confusers: 4,
            gamma: 3.0,
            truth_drop: 0.3,
            rare_max_count: 3,
            d_max: 2,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.confusers == 0 {
            return Err(Error::Config("at least one confuser per slot is required".into()));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.truth_drop) {
            return Err(Error::Config(format!(
                "truth-drop rate must be in [0, 1], got {}",
                self.truth_drop
            )));
        }
        Ok(())
    }
}

/// Lattice edge spanning `len` slots from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanArc {
    pub start: usize,
    pub len: usize,
    pub words: Vec<String>,
    pub acoustic: f64,
}

impl SpanArc {
    /// Decoder token for this arc (words joined with the phrase joiner).
    pub fn token(&self) -> String {
        self.words.join(&PHRASE_JOINER.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionLattice {
    #[serde(rename = "ref")]
    pub reference: Vec<String>,
    /// Per slot: `(candidate, acoustic log-score)`.
    pub slots: Vec<Vec<(String, f64)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arcs: Vec<SpanArc>,
}

impl ConfusionLattice {
    /// Number of complete paths through slots and arcs.
    pub fn num_paths(&self) -> u128 {
        let n = self.slots.len();
        let mut ways = vec![0u128; n + 1];
        ways[0] = 1;
        for i in 0..n {
            ways[i + 1] = ways[i + 1].saturating_add(ways[i].saturating_mul(self.slots[i].len() as u128));
            for arc in self.arcs.iter().filter(|a| a.start == i) {
                ways[i + arc.len] = ways[i + arc.len].saturating_add(ways[i]);
            }
        }
        ways[n]
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("lattice serializes")
    }

    fn check(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(Error::EmptyReference);
        }
        if let Some(i) = self.slots.iter().position(|s| s.is_empty()) {
            return Err(Error::Config(format!("slot {i} has no candidates")));
        }
        for arc in &self.arcs {
            if arc.len == 0 || arc.start + arc.len > self.slots.len() {
                return Err(Error::Config(format!("arc {:?} outside the lattice", arc.words)));
            }
        }
        Ok(())
    }
}

/// Builds lattices over a fixed vocabulary, caching nearest-neighbour lists.
pub struct LatticeBuilder<'a> {
    vocab: &'a Vocabulary,
    config: NoiseConfig,
    lens: Vec<usize>,
    cache: HashMap<String, Vec<(usize, u32)>>,
}

impl<'a> LatticeBuilder<'a> {
    pub fn new(vocab: &'a Vocabulary, config: NoiseConfig) -> Result<Self> {
        config.validate()?;
        if vocab.len() < 2 {
            return Err(Error::Config(
                "confusion lattices need at least two vocabulary words".into(),
            ));
        }
        let lens = vocab.words().iter().map(|w| w.chars().count()).collect();
        Ok(Self {
            vocab,
            config,
            lens,
            cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    /// `K` nearest vocabulary words other than `word`, as `(distance, id)` ordered by distance then id.
    fn nearest(&mut self, word: &str) -> &[(usize, u32)] {
        if !self.cache.contains_key(word) {
            let k = self.config.confusers;
            let own = self.vocab.get(word);
            let len = word.chars().count();
            // Sorted (distance, id) list of the best k so far.
            let mut best: Vec<(usize, u32)> = Vec::with_capacity(k + 1);
            for (id, cand) in self.vocab.words().iter().enumerate() {
                let id = id as u32;
                if Some(id) == own {
                    continue;
                }
                let bound = len.abs_diff(self.lens[id as usize]);
                if best.len() == k && bound >= best[k - 1].0 {
                    continue;
                }
                let d = edit_distance(word, cand);
                if best.len() < k || d < best[k - 1].0 {
                    let pos = best.partition_point(|&(bd, _)| bd <= d);
                    best.insert(pos, (d, id));
                    best.truncate(k);
                }
            }
            self.cache.insert(word.to_string(), best);
        }
        &self.cache[word]
    }

    pub fn build<S: AsRef<str>>(&mut self, reference: &[S]) -> Result<ConfusionLattice> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ reference_hash(reference));
        let gamma = self.config.gamma;
        let mut slots = Vec::with_capacity(reference.len());
        for word in reference {
            let word = word.as_ref();
            let draw: f64 = rng.gen();
            let keep_truth = match self.vocab.get(word) {
                None => false,
                Some(id) => !(self.vocab.count(id) <= self.config.rare_max_count && draw < self.config.truth_drop),
            };
            let mut slot = Vec::with_capacity(self.config.confusers + 1);
            if keep_truth {
                slot.push((word.to_string(), 0.0));
            }
            let vocab = self.vocab;
            for &(d, id) in self.nearest(word) {
                slot.push((vocab.word(id).to_string(), -gamma * d as f64));
            }
            slots.push(slot);
        }
        Ok(ConfusionLattice {
            reference: reference.iter().map(|w| w.as_ref().to_string()).collect(),
            slots,
            arcs: Vec::new(),
        })
    }
}

fn reference_hash<S: AsRef<str>>(reference: &[S]) -> u64 {
    let mut h = Sha256::new();
    for w in reference {
        h.update(w.as_ref().as_bytes());
        h.update([0]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Lattice for a single reference; see [`LatticeBuilder`] for bulk use.
pub fn make_lattice<S: AsRef<str>>(
    reference: &[S],
    vocab: &Vocabulary,
    config: NoiseConfig,
) -> Result<ConfusionLattice> {
    LatticeBuilder::new(vocab, config)?.build(reference)
}

/// Add context entries the simulated channel could plausibly have heard.
///
/// Each multi-word phrase gets a spanning arc over every window whose slots'
/// reference words are all within `d_max` of the matching phrase word. Each
/// single out-of-vocabulary word is added to every slot whose reference word
/// is within `d_max`. In-vocabulary words are already in the decoder
/// dictionary and are never added.
pub fn inject_context_arcs(lattice: &ConfusionLattice, context: &ContextSet, config: &NoiseConfig) -> ConfusionLattice {
    let mut out = lattice.clone();
    let refs: Vec<(&str, usize)> = lattice
        .reference
        .iter()
        .map(|w| (w.as_str(), w.chars().count()))
        .collect();
    let close = |word: &str, slot: usize| -> Option<usize> {
        let (r, rlen) = refs[slot];
        if word.chars().count().abs_diff(rlen) > config.d_max {
            return None;
        }
        let d = edit_distance(word, r);
        (d <= config.d_max).then_some(d)
    };
    for word in context.oov_word_entries() {
        for (i, slot) in out.slots.iter_mut().enumerate() {
            if let Some(d) = close(word, i) {
                slot.push((word.to_string(), -config.gamma * d as f64));
            }
        }
    }
    for phrase in context.phrases() {
        let k = phrase.len();
        if k > refs.len() {
            continue;
        }
        for start in 0..=refs.len() - k {
            let mut total = 0usize;
            let mut ok = true;
            for (j, w) in phrase.words().enumerate() {
                match close(w, start + j) {
                    Some(d) => total += d,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                out.arcs.push(SpanArc {
                    start,
                    len: k,
                    words: phrase.words().map(String::from).collect(),
                    acoustic: -config.gamma * total as f64,
                });
            }
        }
    }
    out
}

/// Whether any slot candidate or arc of `lattice` is a context entry.
pub fn touches_context(lattice: &ConfusionLattice, context: &ContextSet, vocab: &Vocabulary) -> bool {
    if lattice.arcs.iter().any(|a| context.phrase(&a.token()).is_some()) {
        return true;
    }
    lattice.slots.iter().flatten().any(|(c, _)| match vocab.get(c) {
        Some(id) => context.word_entries().contains(&id),
        None => context.oov_word_entries().contains(c),
    })
}

pub fn write_lattices<W: Write>(lattices: &[ConfusionLattice], mut sink: W) -> Result<()> {
    for l in lattices {
        writeln!(sink, "{}", l.to_json_line())?;
    }
    Ok(())
}

/// One lattice per non-blank line; errors carry the line number.
pub fn read_lattices<R: BufRead>(source: R) -> Result<Vec<ConfusionLattice>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lattice: ConfusionLattice =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, format!("bad lattice: {e}")))?;
        lattice.check().map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(lattice);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::{compile_context, Scheme};
    use crate::corpus::{build_vocab, sentences};

    fn vocab(text: &str) -> Vocabulary {
        build_vocab(&sentences(text), 1000).unwrap()
    }

    #[test]
    fn nearest_confusers_with_distances() {
        let v = vocab("cat cat cat cart cart dog");
        let cfg = NoiseConfig {
            confusers: 2,
            gamma: 1.0,
            truth_drop: 0.0,
            ..Default::default()
        };
        let l = make_lattice(&["cat"], &v, cfg).unwrap();
        assert_eq!(
            l.slots[0],
            vec![
                ("cat".to_string(), 0.0),
                ("cart".to_string(), -1.0),
                ("dog".to_string(), -3.0)
            ]
        );
    }

    #[test]
    fn distance_ties_break_by_id() {
        // bat, hat, mat all at distance 1 from "cat"; ids follow frequency then spelling.
        let v = vocab("mat mat hat bat cat");
        let cfg = NoiseConfig {
            confusers: 2,
            truth_drop: 0.0,
            ..Default::default()
        };
        let l = make_lattice(&["cat"], &v, cfg).unwrap();
        let words: Vec<&str> = l.slots[0].iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["cat", "mat", "bat"]);
    }

    #[test]
    fn oov_reference_never_in_lattice() {
        let v = vocab("cat dog");
        let l = make_lattice(&["cow"], &v, NoiseConfig::default()).unwrap();
        assert!(l.slots[0].iter().all(|(w, _)| w != "cow"));
        assert!(l.slots[0].iter().all(|&(_, a)| a <= 0.0));
    }

    #[test]
    fn truth_drop_only_hits_rare_words() {
        let v = vocab(&format!("{} rare", "common ".repeat(10)));
        let cfg = NoiseConfig {
            truth_drop: 1.0,
            rare_max_count: 1,
            ..Default::default()
        };
        let l = make_lattice(&["common", "rare"], &v, cfg).unwrap();
        assert_eq!(l.slots[0][0].0, "common");
        assert!(l.slots[1].iter().all(|(w, _)| w != "rare"));
        let keep = NoiseConfig { truth_drop: 0.0, ..cfg };
        assert_eq!(
            make_lattice(&["common", "rare"], &v, keep).unwrap().slots[1][0].0,
            "rare"
        );
    }

    #[test]
    fn deterministic_bytes() {
        let v = vocab("a b c d e f g h ab cd ef gh");
        let cfg = NoiseConfig {
            truth_drop: 0.5,
            rare_max_count: 5,
            seed: 7,
            ..Default::default()
        };
        let refs = ["a", "b", "cd", "ef", "g"];
        let a = make_lattice(&refs, &v, cfg).unwrap().to_json_line();
        let b = make_lattice(&refs, &v, cfg).unwrap().to_json_line();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_reference_is_error() {
        let v = vocab("a b");
        let empty: [&str; 0] = [];
        assert!(matches!(
            make_lattice(&empty, &v, NoiseConfig::default()),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn phrase_arcs() {
        let v = vocab("the world cup final word cub");
        let cfg = NoiseConfig {
            gamma: 1.5,
            truth_drop: 0.0,
            ..Default::default()
        };
        let ctx = compile_context(&["world cup"], &v, Scheme::Expansion);
        let exact = make_lattice(&["the", "world", "cup", "final"], &v, cfg).unwrap();
        let arcs = inject_context_arcs(&exact, &ctx, &cfg).arcs;
        assert_eq!(arcs.len(), 1);
        assert_eq!((arcs[0].start, arcs[0].len, arcs[0].acoustic), (1, 2, 0.0));

        let near = make_lattice(&["word", "cub"], &v, cfg).unwrap();
        let arcs = inject_context_arcs(&near, &ctx, &cfg).arcs;
        assert_eq!(arcs.len(), 1);
        assert_eq!(arcs[0].acoustic, -1.5 * 2.0);

        let far = compile_context(&["final final"], &v, Scheme::Expansion);
        assert_eq!(inject_context_arcs(&near, &far, &cfg), near);
    }

    #[test]
    fn single_words_join_close_slots() {
        let v = vocab("call the office now");
        let cfg = NoiseConfig {
            gamma: 2.0,
            truth_drop: 0.0,
            ..Default::default()
        };
        let ctx = compile_context(&["offiss"], &v, Scheme::Oov);
        let l = make_lattice(&["call", "the", "office"], &v, cfg).unwrap();
        let out = inject_context_arcs(&l, &ctx, &cfg);
        assert!(out.slots[2].contains(&("offiss".to_string(), -4.0)));
        assert_eq!(out.slots[0], l.slots[0]);
        assert!(touches_context(&out, &ctx, &v));
        assert!(!touches_context(&l, &ctx, &v));
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let v = vocab("a b c");
        let l = make_lattice(&["a", "b"], &v, NoiseConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_lattices(&[l.clone(), l.clone()], &mut buf).unwrap();
        assert_eq!(read_lattices(buf.as_slice()).unwrap(), vec![l.clone(), l]);
        let bad = b"{\"ref\":[\"a\"],\"slots\":[[[\"a\",0.0]]]}\nnot json\n";
        match read_lattices(&bad[..]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn path_count() {
        let v = vocab("a b c");
        let cfg = NoiseConfig {
            confusers: 2,
            truth_drop: 0.0,
            ..Default::default()
        };
        let mut l = make_lattice(&["a", "b"], &v, cfg).unwrap();
        assert_eq!(l.num_paths(), 9);
        l.arcs.push(SpanArc {
            start: 0,
            len: 2,
            words: vec!["a".into(), "b".into()],
            acoustic: 0.0,
        });
        assert_eq!(l.num_paths(), 10);
    }
}
