//! Unsupervised word classes and class-conditional unigrams `P(w | class(w))`.
//!
//! Only regular vocabulary words with a non-zero count take part in the
//! clustering objective; `<unk>` and the sentence markers never belong to a
//! class. Words with a zero count go to a reserved class (see
//! [`ClusterAssignment::reserved_class`]).

mod brown;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::corpus::{NgramCounts, Vocabulary};
use crate::error::{Error, Result};
use crate::ngram_lm::{train_lm, LmConfig, NgramModel};
use brown::BigramGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    num_classes: usize,
    class_of: Vec<u32>,
    class_cond_logp: Vec<f64>,
    class_counts: Vec<u64>,
    reserved: Option<u32>,
    vocab_checksum: String,
}

impl ClusterAssignment {
    /// Build an assignment from an explicit word→class map (classes `0..num_classes`).
    ///
    /// Zero-count words are moved to the reserved class regardless of `class_of`.
    pub fn from_classes(vocab: &Vocabulary, counts: &NgramCounts, class_of: &[u32]) -> Result<Self> {
        if class_of.len() != vocab.len() {
            return Err(Error::Config(format!(
                "class map covers {} words, vocabulary has {}",
                class_of.len(),
                vocab.len()
            )));
        }
        let word_counts: Vec<u64> = (0..vocab.len() as u32).map(|w| counts.get(&[w])).collect();
        // Renumber the used classes densely by their most frequent member.
        let mut order: Vec<u32> = (0..vocab.len() as u32)
            .filter(|&w| word_counts[w as usize] > 0)
            .collect();
        order.sort_by(|&a, &b| word_counts[b as usize].cmp(&word_counts[a as usize]).then(a.cmp(&b)));
        let mut renumber: HashMap<u32, u32> = HashMap::new();
        for &w in &order {
            let next = renumber.len() as u32;
            renumber.entry(class_of[w as usize]).or_insert(next);
        }
        let num_classes = renumber.len();
        let has_zero = word_counts.contains(&0);
        let reserved = has_zero.then_some(num_classes as u32);
        let dense: Vec<u32> = (0..vocab.len())
            .map(|w| {
                if word_counts[w] == 0 {
                    num_classes as u32
                } else {
                    renumber[&class_of[w]]
                }
            })
            .collect();
        let (class_cond_logp, class_counts) = class_conditional(&dense, &word_counts, num_classes, reserved);
        Ok(Self {
            num_classes,
            class_of: dense,
            class_cond_logp,
            class_counts,
            reserved,
            vocab_checksum: vocab.checksum(),
        })
    }

    /// Number of ordinary classes (the reserved class is not included).
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_words(&self) -> usize {
        self.class_of.len()
    }

    pub fn class_of(&self, word: u32) -> u32 {
        self.class_of[word as usize]
    }

    pub fn class_cond_logp(&self, word: u32) -> f64 {
        self.class_cond_logp[word as usize]
    }

    pub fn class_cond_logps(&self) -> &[f64] {
        &self.class_cond_logp
    }

    /// Token count per class, reserved class last when present.
    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    /// Class holding zero-count words, if any exist.
    pub fn reserved_class(&self) -> Option<u32> {
        self.reserved
    }

    pub fn vocab_checksum(&self) -> &str {
        &self.vocab_checksum
    }

    pub fn members(&self, class: u32) -> Vec<u32> {
        (0..self.class_of.len() as u32)
            .filter(|&w| self.class_of[w as usize] == class)
            .collect()
    }

    /// Class map export: `word<TAB>class_id<TAB>log_class_conditional`, sorted by word id.
    pub fn write_tsv<W: Write>(&self, vocab: &Vocabulary, mut sink: W) -> Result<()> {
        self.check_vocab(vocab)?;
        writeln!(sink, "# vocab={} classes={}", self.vocab_checksum, self.num_classes)?;
        for w in 0..self.class_of.len() as u32 {
            writeln!(
                sink,
                "{}\t{}\t{}",
                vocab.word(w),
                self.class_of(w),
                self.class_cond_logp(w)
            )?;
        }
        Ok(())
    }

    /// Read a class map, recomputing the class-conditionals from `counts`.
    pub fn read_tsv<R: BufRead>(source: R, vocab: &Vocabulary, counts: &NgramCounts) -> Result<Self> {
        let mut class_of = vec![u32::MAX; vocab.len()];
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if let Some(header) = line.strip_prefix('#') {
                if let Some(sum) = header.split_whitespace().find_map(|kv| kv.strip_prefix("vocab=")) {
                    if sum != vocab.checksum() {
                        return Err(Error::Integrity(format!(
                            "class map built for vocabulary {sum}, expected {}",
                            vocab.checksum()
                        )));
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(lineno, "expected word<TAB>class<TAB>logp"));
            }
            let w = vocab
                .get(fields[0])
                .ok_or_else(|| Error::Integrity(format!("line {lineno}: word {:?} not in vocabulary", fields[0])))?;
            class_of[w as usize] = fields[1]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad class id {:?}", fields[1])))?;
        }
        if let Some(w) = class_of.iter().position(|&c| c == u32::MAX) {
            return Err(Error::Integrity(format!(
                "word {:?} has no class",
                vocab.word(w as u32)
            )));
        }
        Self::from_classes(vocab, counts, &class_of)
    }

    pub(crate) fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_checksum != vocab.checksum() {
            return Err(Error::Integrity(format!(
                "class assignment built for vocabulary {}, got {}",
                self.vocab_checksum,
                vocab.checksum()
            )));
        }
        Ok(())
    }
}

/// MLE within-class unigrams `log(count(w) / count(class(w)))`.
///
/// Zero-count words (the reserved class) get the floor `log(1 / (N + 1))`,
/// where `N` is the total count over all clustered words.
pub fn class_conditional(
    class_of: &[u32],
    word_counts: &[u64],
    num_classes: usize,
    reserved: Option<u32>,
) -> (Vec<f64>, Vec<u64>) {
    let mut class_counts = vec![0u64; num_classes + usize::from(reserved.is_some())];
    for (w, &c) in class_of.iter().enumerate() {
        class_counts[c as usize] += word_counts[w];
    }
    let total: u64 = word_counts.iter().sum();
    let floor = -((total + 1) as f64).ln();
    let logp = class_of
        .iter()
        .enumerate()
        .map(|(w, &c)| {
            if word_counts[w] == 0 {
                floor
            } else {
                (word_counts[w] as f64 / class_counts[c as usize] as f64).ln()
            }
        })
        .collect();
    (logp, class_counts)
}

fn bigram_graph(counts: &NgramCounts, vocab: &Vocabulary) -> BigramGraph {
    let n = vocab.len();
    let clustered = |id: u32| vocab.is_regular(id) && counts.get(&[id]) > 0;
    let mut out: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut inc: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let mut total = 0.0;
    for (gram, c) in counts.iter() {
        if gram.len() != 2 || c == 0 || !clustered(gram[0]) || !clustered(gram[1]) {
            continue;
        }
        let (x, y, c) = (gram[0], gram[1], c as f64);
        out[x as usize].push((y, c));
        inc[y as usize].push((x, c));
        left[x as usize] += c;
        right[y as usize] += c;
        total += c;
    }
    // Fixed adjacency order keeps every floating-point sum reproducible.
    for list in out.iter_mut().chain(inc.iter_mut()) {
        list.sort_unstable_by_key(|&(y, _)| y);
    }
    BigramGraph {
        out,
        inc,
        left,
        right,
        total,
    }
}

/// Greedy agglomerative clustering maximizing the average mutual information of adjacent classes.
pub fn brown_cluster(counts: &NgramCounts, vocab: &Vocabulary, num_classes: usize) -> Result<ClusterAssignment> {
    if num_classes == 0 {
        return Err(Error::Config("number of classes must be at least 1".into()));
    }
    if num_classes > vocab.len() {
        return Err(Error::Config(format!(
            "{num_classes} classes requested for a vocabulary of {} words",
            vocab.len()
        )));
    }
    let graph = bigram_graph(counts, vocab);
    let order = frequency_order(counts, vocab)?;
    let run = brown::greedy_clusters(&graph, &order, num_classes, false);
    let mut class_of = vec![0u32; vocab.len()];
    for (c, members) in run.clusters.iter().enumerate() {
        for &w in members {
            class_of[w as usize] = c as u32;
        }
    }
    ClusterAssignment::from_classes(vocab, counts, &class_of)
}

/// Window clusters and the greedy merge sequence continuing below them.
///
/// Cuts of one hierarchy are nested: every class of a coarser cut is a union
/// of classes of a finer one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeHierarchy {
    window: usize,
    /// Window cluster index per word; `u32::MAX` for zero-count words.
    base: Vec<u32>,
    merges: Vec<(usize, usize)>,
    vocab_checksum: String,
}

impl MergeHierarchy {
    /// Number of clusters at the top of the hierarchy.
    pub fn window(&self) -> usize {
        self.window.min(self.merges.len() + 1)
    }

    /// Assignment with `num_classes` classes, obtained by replaying merges from the window.
    pub fn cut(&self, vocab: &Vocabulary, counts: &NgramCounts, num_classes: usize) -> Result<ClusterAssignment> {
        if vocab.checksum() != self.vocab_checksum {
            return Err(Error::Integrity("hierarchy built for a different vocabulary".into()));
        }
        let top = self.merges.len() + 1;
        if num_classes == 0 || num_classes > top {
            return Err(Error::Config(format!("cut at {num_classes} classes outside 1..={top}")));
        }
        let mut parent: Vec<usize> = (0..top).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        for &(kept, absorbed) in &self.merges[..top - num_classes] {
            let (k, a) = (find(&mut parent, kept), find(&mut parent, absorbed));
            parent[a] = k;
        }
        let class_of: Vec<u32> = self
            .base
            .iter()
            .map(|&b| {
                if b == u32::MAX {
                    0
                } else {
                    find(&mut parent, b as usize) as u32
                }
            })
            .collect();
        ClusterAssignment::from_classes(vocab, counts, &class_of)
    }
}

/// Run the windowed clustering with `window` clusters, then keep merging down to one.
pub fn brown_hierarchy(counts: &NgramCounts, vocab: &Vocabulary, window: usize) -> Result<MergeHierarchy> {
    if window == 0 || window > vocab.len() {
        return Err(Error::Config(format!(
            "window of {window} clusters for a vocabulary of {} words",
            vocab.len()
        )));
    }
    let graph = bigram_graph(counts, vocab);
    let order = frequency_order(counts, vocab)?;
    let run = brown::greedy_clusters(&graph, &order, window, true);
    let mut base = vec![u32::MAX; vocab.len()];
    for (c, members) in run.clusters.iter().enumerate() {
        for &w in members {
            base[w as usize] = c as u32;
        }
    }
    Ok(MergeHierarchy {
        window,
        base,
        merges: run.tail,
        vocab_checksum: vocab.checksum(),
    })
}

fn frequency_order(counts: &NgramCounts, vocab: &Vocabulary) -> Result<Vec<u32>> {
    let mut order: Vec<u32> = (0..vocab.len() as u32).filter(|&w| counts.get(&[w]) > 0).collect();
    if order.is_empty() {
        return Err(Error::EmptyCorpus("no vocabulary word has a non-zero count".into()));
    }
    order.sort_by(|&a, &b| counts.get(&[b]).cmp(&counts.get(&[a])).then(a.cmp(&b)));
    Ok(order)
}

/// `Σ p(c1,c2) log(p(c1,c2) / (p(c1) p(c2)))` over adjacent word pairs, using left and right class marginals.
pub fn average_mutual_information(assignment: &ClusterAssignment, counts: &NgramCounts, vocab: &Vocabulary) -> f64 {
    let graph = bigram_graph(counts, vocab);
    let cluster_of: Vec<Option<usize>> = (0..vocab.len())
        .map(|w| Some(assignment.class_of[w] as usize))
        .collect();
    brown::ami(&graph, &cluster_of, assignment.class_counts.len())
}

/// Class-sequence language model, kept only for checking the class factorization.
#[derive(Debug, Clone)]
pub struct ClassLm {
    model: NgramModel,
    token_of: Vec<u32>,
}

impl ClassLm {
    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    /// Class-vocabulary id standing in for a word id (specials map to specials).
    pub fn class_token(&self, word: u32) -> u32 {
        self.token_of[word as usize]
    }
}

/// Train a Witten-Bell model over class-id sequences with the same order as `counts`.
pub fn train_class_lm(assignment: &ClusterAssignment, counts: &NgramCounts, vocab: &Vocabulary) -> Result<ClassLm> {
    assignment.check_vocab(vocab)?;
    let num = assignment.class_counts.len();
    let names: Vec<String> = (0..num).map(|c| format!("class{c}")).collect();
    let class_vocab = Arc::new(Vocabulary::from_ranked(names, assignment.class_counts.clone(), 0, 0)?);
    let mut token_of: Vec<u32> = assignment.class_of.clone();
    token_of.push(class_vocab.unk_id());
    token_of.push(class_vocab.bos_id());
    token_of.push(class_vocab.eos_id());

    let mut mapped = NgramCounts::new(counts.order());
    let mut map: HashMap<Vec<u32>, u64> = HashMap::new();
    for (gram, c) in counts.iter() {
        let key: Vec<u32> = gram.iter().map(|&w| token_of[w as usize]).collect();
        *map.entry(key).or_default() += c;
    }
    mapped.replace(map, counts.total_tokens());
    let model = train_lm(&mapped, class_vocab, LmConfig { order: counts.order() })?;
    Ok(ClassLm { model, token_of })
}

/// `log P(class(w) | class history) + log P(w | class(w))`.
pub fn class_ngram_score(assignment: &ClusterAssignment, class_lm: &ClassLm, history: &[u32], word: u32) -> f64 {
    let hist: Vec<u32> = history.iter().map(|&w| class_lm.class_token(w)).collect();
    let class_term = class_lm.model.score(&hist, class_lm.class_token(word));
    let word_term = if (word as usize) < assignment.class_of.len() {
        assignment.class_cond_logp(word)
    } else {
        0.0
    };
    class_term + word_term
}

#[cfg(test)]
mod tests;
