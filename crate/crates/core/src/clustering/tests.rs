use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::corpus::{build_vocab, count_ngrams, sentences};

struct Fixture {
    vocab: Arc<Vocabulary>,
    counts: NgramCounts,
}

fn fixture(text: &str, order: usize) -> Fixture {
    let corpus = sentences(text);
    let vocab = Arc::new(build_vocab(&corpus, 1000).unwrap());
    let counts = count_ngrams(&corpus, &vocab, order).unwrap();
    Fixture { vocab, counts }
}

/// AMI straight from the raw text: adjacent in-sentence word pairs, classes given by name.
fn oracle_ami(text: &str, class_of: &HashMap<&str, usize>) -> f64 {
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut total = 0.0;
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        for pair in words.windows(2) {
            *joint.entry((class_of[pair[0]], class_of[pair[1]])).or_default() += 1.0;
            total += 1.0;
        }
    }
    let mut left: HashMap<usize, f64> = HashMap::new();
    let mut right: HashMap<usize, f64> = HashMap::new();
    for (&(a, b), &c) in &joint {
        *left.entry(a).or_default() += c / total;
        *right.entry(b).or_default() += c / total;
    }
    joint
        .iter()
        .map(|(&(a, b), &c)| {
            let p = c / total;
            p * (p / (left[&a] * right[&b])).ln()
        })
        .sum()
}

/// Best AMI over every split of `words` into two non-empty classes.
fn exhaustive_best(text: &str, words: &[&str]) -> f64 {
    let n = words.len();
    let mut best = f64::NEG_INFINITY;
    // Fix the first word in class 0 so each partition is visited once.
    for mask in 0u32..(1 << (n - 1)) {
        let full = mask << 1;
        if full == 0 {
            continue;
        }
        let class_of: HashMap<&str, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (*w, ((full >> i) & 1) as usize))
            .collect();
        best = best.max(oracle_ami(text, &class_of));
    }
    best
}

#[test]
fn oracle_matches_hand_computed_four_word_case() {
    let text = "a b c d";
    let words = ["a", "b", "c", "d"];
    // {a,c} {b,d}: p(X,Y) = 2/3, p(Y,X) = 1/3, left (2/3, 1/3), right (1/3, 2/3).
    let best_hand = 2.0 / 3.0 * 1.5f64.ln() + 1.0 / 3.0 * 3.0f64.ln();
    let split: HashMap<&str, usize> = [("a", 0), ("c", 0), ("b", 1), ("d", 1)].into_iter().collect();
    assert!((oracle_ami(text, &split) - best_hand).abs() < 1e-12);
    // {a,b} {c,d}: three cells of 1/3 each.
    let other: HashMap<&str, usize> = [("a", 0), ("b", 0), ("c", 1), ("d", 1)].into_iter().collect();
    assert!((oracle_ami(text, &other) - 1.6875f64.ln() / 3.0).abs() < 1e-12);
    assert!((exhaustive_best(text, &words) - best_hand).abs() < 1e-12);

    let f = fixture(text, 2);
    let greedy = brown_cluster(&f.counts, &f.vocab, 2).unwrap();
    let ami = average_mutual_information(&greedy, &f.counts, &f.vocab);
    assert!((ami - best_hand).abs() < 1e-9, "greedy {ami} vs best {best_hand}");
}

#[test]
fn identity_clustering_has_zero_class_conditional() {
    let f = fixture("the cat sat\nthe dog sat\na cat ran", 2);
    let a = brown_cluster(&f.counts, &f.vocab, f.vocab.len()).unwrap();
    assert_eq!(a.num_classes(), f.vocab.len());
    assert!(a.class_cond_logps().iter().all(|&l| l == 0.0));
}

#[test]
fn single_class_is_unigram_mle() {
    let f = fixture("the cat sat\nthe dog sat", 2);
    let a = brown_cluster(&f.counts, &f.vocab, 1).unwrap();
    let total: u64 = (0..f.vocab.len() as u32).map(|w| f.counts.get(&[w])).sum();
    assert_eq!(total, 6);
    for w in 0..f.vocab.len() as u32 {
        let mle = (f.counts.get(&[w]) as f64 / total as f64).ln();
        assert!((a.class_cond_logp(w) - mle).abs() < 1e-12);
    }
    assert!((a.class_cond_logp(f.vocab.id("cat")) + 6f64.ln()).abs() < 1e-12);
    assert!(average_mutual_information(&a, &f.counts, &f.vocab).abs() < 1e-15);
}

#[test]
fn hand_built_pair_class() {
    let f = fixture("the cat sat\nthe dog sat", 2);
    let v = &f.vocab;
    // the:0 sat:1 {cat,dog}:2
    let mut class_of = vec![0u32; v.len()];
    class_of[v.id("sat") as usize] = 1;
    class_of[v.id("cat") as usize] = 2;
    class_of[v.id("dog") as usize] = 2;
    let a = ClusterAssignment::from_classes(v, &f.counts, &class_of).unwrap();
    assert!((a.class_cond_logp(v.id("cat")) - 0.5f64.ln()).abs() < 1e-15);
    assert_eq!(a.class_cond_logp(v.id("the")), 0.0);
}

#[test]
fn two_symbol_chain_identity_ami() {
    let text = "a b a b";
    let f = fixture(text, 2);
    let a = brown_cluster(&f.counts, &f.vocab, 2).unwrap();
    let closed = 2.0 / 3.0 * 1.5f64.ln() + 1.0 / 3.0 * 3.0f64.ln();
    assert!((average_mutual_information(&a, &f.counts, &f.vocab) - closed).abs() < 1e-12);
}

#[test]
fn too_many_classes_is_config_error() {
    let f = fixture("a b c", 2);
    assert!(matches!(brown_cluster(&f.counts, &f.vocab, 4), Err(Error::Config(_))));
    assert!(matches!(brown_cluster(&f.counts, &f.vocab, 0), Err(Error::Config(_))));
}

#[test]
fn zero_count_words_go_to_reserved_class() {
    let vocab_corpus = sentences("a b c\nd");
    let vocab = build_vocab(&vocab_corpus, 10).unwrap();
    let counts = count_ngrams(&sentences("a b c\na b"), &vocab, 2).unwrap();
    let a = brown_cluster(&counts, &vocab, 2).unwrap();
    let d = vocab.id("d");
    let reserved = a.reserved_class().expect("d has no count");
    assert_eq!(a.class_of(d), reserved);
    assert!((a.class_cond_logp(d) + 6f64.ln()).abs() < 1e-12);
    assert!(a.class_cond_logp(d).is_finite());
}

#[test]
fn deterministic_and_normalized_on_larger_corpus() {
    let text = "the cat sat on the mat\nthe dog sat on the rug\na cat ran to the door\na dog ran to the mat\n\
                my cat ate the fish\nmy dog ate the bone\nthe bird sang on the wire";
    let f = fixture(text, 2);
    let a = brown_cluster(&f.counts, &f.vocab, 5).unwrap();
    let b = brown_cluster(&f.counts, &f.vocab, 5).unwrap();
    assert_eq!(a, b);
    assert_normalized(&a);
}

fn assert_normalized(a: &ClusterAssignment) {
    let mut mass = vec![0.0; a.class_counts().len()];
    for w in 0..a.num_words() as u32 {
        mass[a.class_of(w) as usize] += a.class_cond_logp(w).exp();
    }
    for (c, m) in mass.iter().enumerate() {
        if Some(c as u32) != a.reserved_class() {
            assert!((m - 1.0).abs() < 1e-9, "class {c} mass {m}");
        }
    }
}

const ANIMALS: &str = "the cat sat on the mat\nthe dog sat on the rug\na cat ran to the door\na dog ran to the mat\n\
                my cat ate the fish\nmy dog ate the bone\nthe bird sang on the wire\nthe fish swam in the pond";

#[test]
fn mean_bias_shrinks_along_the_hierarchy() {
    let f = fixture(ANIMALS, 2);
    let h = brown_hierarchy(&f.counts, &f.vocab, f.vocab.len()).unwrap();
    let mut prev = f64::INFINITY;
    for k in 1..=f.vocab.len() {
        let a = h.cut(&f.vocab, &f.counts, k).unwrap();
        assert_eq!(a.num_classes(), k);
        let mean = -a.class_cond_logps().iter().sum::<f64>() / a.num_words() as f64;
        assert!(mean <= prev + 1e-12, "k={k}: {mean} > {prev}");
        prev = mean;
    }
    assert_eq!(prev, 0.0);
}

#[test]
fn hierarchy_cut_at_window_equals_brown_cluster() {
    let f = fixture(ANIMALS, 2);
    for k in [1, 3, 6] {
        let h = brown_hierarchy(&f.counts, &f.vocab, k).unwrap();
        assert_eq!(
            h.cut(&f.vocab, &f.counts, k).unwrap(),
            brown_cluster(&f.counts, &f.vocab, k).unwrap()
        );
    }
}

#[test]
fn hierarchy_cuts_are_nested() {
    let f = fixture(ANIMALS, 2);
    let h = brown_hierarchy(&f.counts, &f.vocab, 8).unwrap();
    let fine = h.cut(&f.vocab, &f.counts, 8).unwrap();
    let coarse = h.cut(&f.vocab, &f.counts, 3).unwrap();
    for x in 0..f.vocab.len() as u32 {
        for y in 0..f.vocab.len() as u32 {
            if fine.class_of(x) == fine.class_of(y) {
                assert_eq!(coarse.class_of(x), coarse.class_of(y));
            }
        }
    }
}

#[test]
fn class_lm_identity_matches_word_lm() {
    let text = "the cat sat\nthe dog sat\na cat ran home\nthe dog ran";
    let f = fixture(text, 3);
    let word_lm = train_lm(&f.counts, f.vocab.clone(), LmConfig { order: 3 }).unwrap();
    let a = brown_cluster(&f.counts, &f.vocab, f.vocab.len()).unwrap();
    let clm = train_class_lm(&a, &f.counts, &f.vocab).unwrap();
    let v = &f.vocab;
    for h in [
        vec![],
        vec![v.bos_id()],
        vec![v.bos_id(), v.id("the")],
        vec![v.id("cat"), v.id("ran")],
    ] {
        for w in 0..v.num_ids() as u32 {
            if w == v.bos_id() {
                continue;
            }
            let diff = (class_ngram_score(&a, &clm, &h, w) - word_lm.score(&h, w)).abs();
            assert!(diff < 1e-9, "{h:?} {w}: {diff}");
        }
    }
}

#[test]
fn single_class_lm_by_hand() {
    // Unigram class LM: the one word class plus <unk> and </s>.
    let f = fixture("the cat sat\nthe dog sat", 1);
    let a = brown_cluster(&f.counts, &f.vocab, 1).unwrap();
    let clm = train_class_lm(&a, &f.counts, &f.vocab).unwrap();
    // Class tokens: class0 x6, </s> x2; N = 8, T = 2, 3 predictable ids.
    let p_class = (6.0 + 2.0 / 3.0) / 10.0;
    let cat = f.vocab.id("cat");
    let expected = (p_class * 1.0 / 6.0f64).ln();
    assert!((class_ngram_score(&a, &clm, &[], cat) - expected).abs() < 1e-12);
}

#[test]
fn class_factorization_normalizes() {
    let text = "the cat sat on the mat\nthe dog sat on the rug\na cat ran to the door\na dog ran to the mat";
    let f = fixture(text, 3);
    let a = brown_cluster(&f.counts, &f.vocab, 3).unwrap();
    let clm = train_class_lm(&a, &f.counts, &f.vocab).unwrap();
    let v = &f.vocab;
    for h in [
        vec![],
        vec![v.bos_id()],
        vec![v.id("the"), v.id("cat")],
        vec![v.id("mat"), v.id("mat")],
    ] {
        let mass: f64 = (0..v.num_ids() as u32)
            .filter(|&w| w != v.bos_id())
            .map(|w| class_ngram_score(&a, &clm, &h, w).exp())
            .sum();
        assert!((mass - 1.0).abs() < 1e-6, "{h:?}: {mass}");
    }
}

#[test]
fn class_map_tsv_round_trip() {
    let f = fixture("the cat sat\nthe dog sat\na cat ran", 2);
    let a = brown_cluster(&f.counts, &f.vocab, 3).unwrap();
    let mut buf = Vec::new();
    a.write_tsv(&f.vocab, &mut buf).unwrap();
    let back = ClusterAssignment::read_tsv(buf.as_slice(), &f.vocab, &f.counts).unwrap();
    assert_eq!(back, a);

    let other = fixture("x y z", 2);
    assert!(matches!(
        ClusterAssignment::read_tsv(buf.as_slice(), &other.vocab, &other.counts),
        Err(Error::Integrity(_))
    ));
}

const ALPHABET: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

fn small_corpus() -> impl Strategy<Value = String> {
    (2usize..=8).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0..n, 1..7), 1..8).prop_map(move |lines| {
            // Every word appears at least once so the vocabulary has exactly n entries.
            let mut text: Vec<String> = lines
                .iter()
                .map(|l| l.iter().map(|&i| ALPHABET[i]).collect::<Vec<_>>().join(" "))
                .collect();
            text.push(ALPHABET[..n].join(" "));
            text.join("\n")
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_never_beats_exhaustive(text in small_corpus()) {
        let f = fixture(&text, 2);
        let a = brown_cluster(&f.counts, &f.vocab, 2).unwrap();
        let words: Vec<&str> = f.vocab.words().iter().map(String::as_str).collect();
        let best = exhaustive_best(&text, &words);
        let greedy = average_mutual_information(&a, &f.counts, &f.vocab);
        prop_assert!(greedy <= best + 1e-12, "greedy {} > exhaustive {}", greedy, best);

        // The implementation's AMI agrees with the text-level oracle on its own partition.
        let class_of: HashMap<&str, usize> = words.iter().map(|w| (*w, a.class_of(f.vocab.id(w)) as usize)).collect();
        prop_assert!((oracle_ami(&text, &class_of) - greedy).abs() < 1e-12);
        assert_normalized(&a);
    }
}
