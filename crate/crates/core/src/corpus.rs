//! Tokenization, capped vocabulary construction and n-gram counting.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Lowercased whitespace-split tokens of one sentence.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// One token sequence per input line. Empty lines yield empty sequences.
pub fn sentences(text: &str) -> Vec<Vec<String>> {
    text.lines().map(tokenize).collect()
}

fn word_list_checksum(words: &[String]) -> String {
    let mut hasher = Sha256::new();
    for w in words {
        hasher.update(w.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn is_special(word: &str) -> bool {
    word == UNK || word == BOS || word == EOS
}

/// Frequency-ranked word list with dense ids.
///
/// Regular words occupy ids `0..len()`. The unknown token, sentence start and
/// sentence end follow at `len()`, `len() + 1` and `len() + 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    id_of: FxHashMap<String, u32>,
    checksum: String,
    max_size: usize,
    unk_count: u64,
    sentence_count: u64,
}

impl Vocabulary {
    /// Rebuild a vocabulary from an already ranked word list (ARPA or TSV import).
    pub fn from_ranked(words: Vec<String>, counts: Vec<u64>, unk_count: u64, sentence_count: u64) -> Result<Self> {
        if words.len() != counts.len() {
            return Err(Error::Config("word and count lists differ in length".into()));
        }
        let mut id_of = FxHashMap::with_capacity_and_hasher(words.len(), Default::default());
        for (i, w) in words.iter().enumerate() {
            if is_special(w) {
                return Err(Error::Config(format!("reserved token {w} in word list")));
            }
            if id_of.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate word {w}")));
            }
        }
        let max_size = words.len().max(1);
        let checksum = word_list_checksum(&words);
        Ok(Self {
            words,
            counts,
            id_of,
            checksum,
            max_size,
            unk_count,
            sentence_count,
        })
    }

    /// Number of regular words, excluding the three special tokens.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Size of the full id space including specials.
    pub fn num_ids(&self) -> usize {
        self.words.len() + 3
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn unk_id(&self) -> u32 {
        self.words.len() as u32
    }

    pub fn bos_id(&self) -> u32 {
        self.words.len() as u32 + 1
    }

    pub fn eos_id(&self) -> u32 {
        self.words.len() as u32 + 2
    }

    pub fn is_regular(&self, id: u32) -> bool {
        (id as usize) < self.words.len()
    }

    /// Id of a regular word, if it is in the vocabulary.
    pub fn get(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    /// Id of a word, mapping anything outside the list to the unknown token.
    pub fn id(&self, word: &str) -> u32 {
        self.get(word).unwrap_or_else(|| self.unk_id())
    }

    /// Id lookup that also resolves the special token spellings.
    pub fn symbol_id(&self, symbol: &str) -> Option<u32> {
        match symbol {
            UNK => Some(self.unk_id()),
            BOS => Some(self.bos_id()),
            EOS => Some(self.eos_id()),
            w => self.get(w),
        }
    }

    pub fn word(&self, id: u32) -> &str {
        let n = self.words.len() as u32;
        match id {
            i if i < n => &self.words[i as usize],
            i if i == n => UNK,
            i if i == n + 1 => BOS,
            i if i == n + 2 => EOS,
            _ => panic!("id {id} outside vocabulary of {n} words"),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Training-corpus count of any id. Sentence markers count once per sentence.
    pub fn count(&self, id: u32) -> u64 {
        let n = self.words.len() as u32;
        match id {
            i if i < n => self.counts[i as usize],
            i if i == n => self.unk_count,
            _ => self.sentence_count,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Short content hash over the ranked word list. Binds downstream artifacts to this vocabulary.
    pub fn checksum(&self) -> String {
        self.checksum.clone()
    }

    /// TSV export: `word<TAB>id<TAB>count`, sorted by id, specials last.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> Result<()> {
        for id in 0..self.num_ids() as u32 {
            writeln!(sink, "{}\t{}\t{}", self.word(id), id, self.count(id))?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R) -> Result<Self> {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        let mut unk_count = 0;
        let mut sentence_count = 0;
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(lineno, "expected word<TAB>id<TAB>count"));
            }
            let id: usize = fields[1]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad id {:?}", fields[1])))?;
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad count {:?}", fields[2])))?;
            match fields[0] {
                UNK => unk_count = count,
                BOS | EOS => sentence_count = count,
                w => {
                    if id != words.len() {
                        return Err(Error::parse(lineno, format!("id {id} out of sequence")));
                    }
                    words.push(w.to_string());
                    counts.push(count);
                }
            }
        }
        if words.is_empty() {
            return Err(Error::EmptyCorpus("vocabulary file lists no words".into()));
        }
        Self::from_ranked(words, counts, unk_count, sentence_count)
    }
}

/// Keep the `max_size` most frequent words; ties are broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size == 0 {
        return Err(Error::Config("max_size must be at least 1".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    let mut specials = 0u64;
    for sentence in corpus {
        for tok in sentence {
            let tok = tok.as_ref();
            if is_special(tok) {
                specials += 1;
            } else {
                *freq.entry(tok).or_default() += 1;
            }
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus("corpus contains no tokens".into()));
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let unk_count = specials + ranked.iter().skip(max_size).map(|(_, c)| c).sum::<u64>();
    ranked.truncate(max_size);
    let (words, counts): (Vec<String>, Vec<u64>) = ranked.into_iter().map(|(w, c)| (w.to_string(), c)).unzip();
    let mut vocab = Vocabulary::from_ranked(words, counts, unk_count, corpus.len() as u64)?;
    vocab.max_size = max_size;
    Ok(vocab)
}

/// Counts of every 1..=order gram over boundary-framed, unk-mapped sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NgramCounts {
    order: usize,
    counts: HashMap<Vec<u32>, u64>,
    total_tokens: u64,
}

impl NgramCounts {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            counts: HashMap::new(),
            total_tokens: 0,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of counted positions, sentence markers included.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn get(&self, gram: &[u32]) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Add one already-encoded sentence (without boundary markers).
    pub fn add_sentence(&mut self, ids: &[u32], bos: u32, eos: u32) {
        let mut framed = Vec::with_capacity(ids.len() + 2);
        framed.push(bos);
        framed.extend_from_slice(ids);
        framed.push(eos);
        self.total_tokens += framed.len() as u64;
        for start in 0..framed.len() {
            for k in 1..=self.order.min(framed.len() - start) {
                *self.counts.entry(framed[start..start + k].to_vec()).or_default() += 1;
            }
        }
    }

    pub(crate) fn replace(&mut self, counts: HashMap<Vec<u32>, u64>, total_tokens: u64) {
        self.counts = counts;
        self.total_tokens = total_tokens;
    }

    /// Pure addition of another shard's counts.
    pub fn merge(&mut self, other: &NgramCounts) {
        assert_eq!(self.order, other.order, "cannot merge counts of different orders");
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_default() += v;
        }
        self.total_tokens += other.total_tokens;
    }
}

pub fn count_ngrams<S: AsRef<str>>(corpus: &[Vec<S>], vocab: &Vocabulary, order: usize) -> Result<NgramCounts> {
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    let mut counts = NgramCounts::new(order);
    for sentence in corpus {
        counts.add_sentence(&vocab.encode(sentence), vocab.bos_id(), vocab.eos_id());
    }
    Ok(counts)
}
