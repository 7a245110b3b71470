use std::sync::Arc;

use ctxbias::corpus::{build_vocab, count_ngrams, sentences, tokenize, NgramCounts, Vocabulary};
use ctxbias::ngram_lm::{read_arpa, train_lm, write_arpa, LmConfig, NgramModel};
use proptest::prelude::*;

const WORDS: [&str; 6] = ["the", "cat", "sat", "on", "a", "mat"];

fn corpus_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(0..WORDS.len(), 1..8), 1..12).prop_map(|lines| {
        lines
            .iter()
            .map(|l| l.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn setup(text: &str, cap: usize, order: usize) -> (Arc<Vocabulary>, NgramCounts, NgramModel) {
    let corpus = sentences(text);
    let vocab = Arc::new(build_vocab(&corpus, cap).unwrap());
    let counts = count_ngrams(&corpus, &vocab, order).unwrap();
    let model = train_lm(&counts, vocab.clone(), LmConfig { order }).unwrap();
    (vocab, counts, model)
}

fn mass(m: &NgramModel, history: &[u32]) -> f64 {
    (0..m.vocab().num_ids() as u32).map(|w| m.score(history, w).exp()).sum()
}

#[test]
fn hand_counts_on_toy_corpus() {
    let corpus = sentences("the cat sat\nthe dog sat");
    let vocab = build_vocab(&corpus, 10).unwrap();
    let counts = count_ngrams(&corpus, &vocab, 2).unwrap();
    let (the, cat, sat) = (vocab.id("the"), vocab.id("cat"), vocab.id("sat"));
    assert_eq!(counts.get(&[the]), 2);
    assert_eq!(counts.get(&[the, cat]), 1);
    assert_eq!(counts.get(&[cat, sat]), 1);
}

#[test]
fn arpa_round_trip_is_idempotent() {
    let (_, _, m) = setup("the cat sat on the mat\na cat sat\nthe mat", 100, 3);
    let mut first = Vec::new();
    write_arpa(&m, &mut first).unwrap();
    let back = read_arpa(first.as_slice()).unwrap();
    let mut second = Vec::new();
    write_arpa(&back, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn arpa_model_takes_counted_vocabulary() {
    let (vocab, _, m) = setup("the cat sat on the mat\na cat sat", 100, 2);
    let mut buf = Vec::new();
    write_arpa(&m, &mut buf).unwrap();
    let back = read_arpa(buf.as_slice()).unwrap();
    assert_eq!(back.vocab().count(vocab.id("cat")), 0);
    let back = back.with_vocab(vocab.clone()).unwrap();
    assert_eq!(back.vocab().count(vocab.id("cat")), 2);
    let (other, _, _) = setup("the dog sat", 100, 2);
    assert!(m.with_vocab(other).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prefix_counts_bound_extensions(text in corpus_text()) {
        let (_, counts, _) = setup(&text, 100, 3);
        for (gram, c) in counts.iter() {
            if gram.len() > 1 {
                prop_assert!(c <= counts.get(&gram[..gram.len() - 1]), "{gram:?}");
            }
        }
    }

    #[test]
    fn vocabulary_is_deterministic_and_covers_tokens(text in corpus_text(), cap in 1usize..8) {
        let a = build_vocab(&sentences(&text), cap).unwrap();
        let b = build_vocab(&sentences(&text), cap).unwrap();
        prop_assert_eq!(&a, &b);
        for w in tokenize(&text.replace('\n', " ")) {
            let id = a.id(&w);
            prop_assert!(a.is_regular(id) || id == a.unk_id());
        }
    }

    #[test]
    fn distributions_normalize(text in corpus_text(), order in 1usize..=4, h in prop::collection::vec(0u32..9, 0..3)) {
        let (vocab, _, m) = setup(&text, 4, order);
        // Ids beyond the vocabulary fold onto <unk>; <s> may start a history.
        let history: Vec<u32> = h.iter().map(|&i| if (i as usize) < vocab.num_ids() && i != vocab.eos_id() { i } else { vocab.unk_id() }).collect();
        prop_assert!((mass(&m, &history) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unseen_history_backs_off_to_lower_order(text in corpus_text(), a in 0usize..6, b in 0usize..6) {
        let (vocab, _, high) = setup(&text, 100, 3);
        let (_, _, low) = setup(&text, 100, 2);
        let (Some(x), Some(y)) = (vocab.get(WORDS[a]), vocab.get(WORDS[b])) else {
            return Ok(());
        };
        let history = [x, y];
        prop_assume!(!high.has_context(&history));
        for w in 0..vocab.num_ids() as u32 {
            prop_assert_eq!(high.score(&history, w), low.score(&history, w));
        }
    }

    #[test]
    fn arpa_preserves_scores(text in corpus_text(), order in 1usize..=3) {
        let (vocab, counts, m) = setup(&text, 100, order);
        let mut buf = Vec::new();
        write_arpa(&m, &mut buf).unwrap();
        let back = read_arpa(buf.as_slice()).unwrap();
        prop_assert_eq!(back.vocab().words(), vocab.words());
        for (gram, _) in counts.iter() {
            let (h, w) = gram.split_at(gram.len() - 1);
            let (a, b) = (m.score(h, w[0]), back.score(h, w[0]));
            prop_assert!(a == b || (a - b).abs() < 1e-9, "{gram:?}: {a} vs {b}");
        }
    }
}
