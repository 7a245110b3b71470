//! Static per-word bias table and context-dependent score composition.
//!
//! The table stores `-log P(w | class(w))` for every vocabulary word and is
//! fixed after training. At inference a [`ContextSet`] selects which tokens
//! receive a boost, and [`BiasConfig`] scales it:
//!
//! * in-vocabulary context word: `lambda * base_bias(w)`
//! * out-of-vocabulary context word, or a whole phrase under [`Scheme::Oov`]: `alpha`
//! * phrase under [`Scheme::Expansion`]: the sum of its constituents' boosts,
//!   granted only when the full phrase is emitted as one token
//! * anything else: `0`

use std::collections::BTreeSet;
use std::fmt;
use std::hash::BuildHasher;
use std::io::{BufRead, Write};
use std::str::FromStr;

use hashbrown::HashTable;
use rustc_hash::FxBuildHasher;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::ngram_lm::NgramModel;

/// Joins the words of a phrase into one decoder token. Tokenization splits on
/// it, so it can never occur inside a corpus word.
pub const PHRASE_JOINER: char = '\u{a0}';

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    base_bias: Vec<f64>,
    num_classes: usize,
    vocab_checksum: String,
}

/// `base_bias(w) = -class_cond_logp(w)` for every regular word.
pub fn build_bias_table(assignment: &ClusterAssignment) -> BiasTable {
    let base_bias = assignment
        .class_cond_logps()
        .iter()
        .map(|&l| if l == 0.0 { 0.0 } else { -l })
        .collect();
    BiasTable {
        base_bias,
        num_classes: assignment.num_classes(),
        vocab_checksum: assignment.vocab_checksum().to_string(),
    }
}

impl BiasTable {
    /// Base bias of a word id; `<unk>` and the sentence markers have none.
    pub fn base_bias(&self, word: u32) -> f64 {
        self.base_bias.get(word as usize).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.base_bias
    }

    pub fn len(&self) -> usize {
        self.base_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_bias.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab_checksum(&self) -> &str {
        &self.vocab_checksum
    }

    /// `word<TAB>base_bias` in id order after a `# vocab=<checksum> classes=<n>` header.
    pub fn write_tsv<W: Write>(&self, vocab: &Vocabulary, mut sink: W) -> Result<()> {
        check_checksum("bias table", &self.vocab_checksum, vocab)?;
        writeln!(sink, "# vocab={} classes={}", self.vocab_checksum, self.num_classes)?;
        for (w, b) in self.base_bias.iter().enumerate() {
            writeln!(sink, "{}\t{}", vocab.word(w as u32), b)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(source: R, vocab: &Vocabulary) -> Result<Self> {
        let mut base_bias = vec![f64::NAN; vocab.len()];
        let mut num_classes = None;
        let mut checksum = None;
        for (i, line) in source.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    if let Some(sum) = kv.strip_prefix("vocab=") {
                        checksum = Some(sum.to_string());
                    } else if let Some(n) = kv.strip_prefix("classes=") {
                        num_classes = Some(n.parse().map_err(|_| Error::parse(lineno, "bad class count"))?);
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (word, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected word<TAB>base_bias"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad bias value {value:?}")))?;
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::parse(
                    lineno,
                    format!("bias must be finite and non-negative, got {value}"),
                ));
            }
            let w = vocab
                .get(word)
                .ok_or_else(|| Error::Integrity(format!("line {lineno}: word {word:?} not in vocabulary")))?;
            base_bias[w as usize] = value;
        }
        let checksum = checksum.ok_or_else(|| Error::parse(1, "missing `# vocab=` header"))?;
        check_checksum("bias table", &checksum, vocab)?;
        if let Some(w) = base_bias.iter().position(|b| b.is_nan()) {
            return Err(Error::Integrity(format!(
                "word {:?} missing from bias table",
                vocab.word(w as u32)
            )));
        }
        Ok(Self {
            base_bias,
            num_classes: num_classes.unwrap_or(0),
            vocab_checksum: checksum,
        })
    }
}

fn check_checksum(what: &str, expected: &str, vocab: &Vocabulary) -> Result<()> {
    let actual = vocab.checksum();
    if expected != actual {
        return Err(Error::Integrity(format!(
            "{what} built for vocabulary {expected}, got {actual}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub lambda: f64,
    pub alpha: f64,
}

impl BiasConfig {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        let config = Self { lambda, alpha };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 5.0,
        }
    }
}

/// How multi-word context phrases are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Score the phrase words with the LM; boost each word only on a full match.
    Expansion,
    /// Score the phrase as one unknown word boosted by `alpha`.
    Oov,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Expansion => "expansion",
            Scheme::Oov => "oov",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expansion" => Ok(Scheme::Expansion),
            "oov" => Ok(Scheme::Oov),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?}, expected expansion or oov"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constituent {
    Word(u32),
    Oov(String),
}

/// A multi-word context phrase, borrowed from its [`ContextSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phrase<'a> {
    token: &'a str,
    constituents: &'a [Constituent],
}

impl<'a> Phrase<'a> {
    /// Joined decoder token.
    pub fn token(&self) -> &'a str {
        self.token
    }

    pub fn words(&self) -> impl Iterator<Item = &'a str> {
        expand_surface(self.token)
    }

    pub fn constituents(&self) -> &'a [Constituent] {
        self.constituents
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.constituents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constituents.is_empty()
    }
}

/// Byte range of a phrase token in the shared text and its constituent range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    text: (usize, usize),
    parts: (usize, usize),
}

/// Compiled context. Phrase tokens and constituents live in two flat buffers.
#[derive(Clone)]
pub struct ContextSet {
    scheme: Scheme,
    word_entries: BTreeSet<u32>,
    oov_word_entries: BTreeSet<String>,
    text: String,
    constituents: Vec<Constituent>,
    spans: Vec<Span>,
    index: HashTable<usize>,
    vocab_checksum: String,
}

fn span_token<'a>(text: &'a str, spans: &[Span], i: usize) -> &'a str {
    let (a, b) = spans[i].text;
    &text[a..b]
}

/// Sort raw phrases into single in-vocabulary words, single OOV words and
/// multi-word phrases. Words are lowercased, blank entries are skipped and
/// duplicates collapse. One pass over the text, no model estimation.
pub fn compile_context<S: AsRef<str>>(phrases: &[S], vocab: &Vocabulary, scheme: Scheme) -> ContextSet {
    let mut ctx = ContextSet::empty(vocab, scheme);
    ctx.spans.reserve(phrases.len());
    ctx.index.reserve(phrases.len(), |_| 0);
    for raw in phrases {
        // Build the joined token and its constituents at the end of the shared
        // buffers; roll both back unless the phrase is kept.
        let mark = ctx.text.len();
        let start = ctx.constituents.len();
        for_each_word(raw.as_ref(), |word| {
            if ctx.constituents.len() > start {
                ctx.text.push(PHRASE_JOINER);
            }
            let at = ctx.text.len();
            push_lowercase(&mut ctx.text, word);
            let word = &ctx.text[at..];
            ctx.constituents.push(match vocab.get(word) {
                Some(id) => Constituent::Word(id),
                None => Constituent::Oov(word.to_string()),
            });
        });
        match ctx.constituents.len() - start {
            0 => {}
            1 => {
                match ctx.constituents.pop().expect("one word") {
                    Constituent::Word(id) => ctx.word_entries.insert(id),
                    Constituent::Oov(word) => ctx.oov_word_entries.insert(word),
                };
                ctx.text.truncate(mark);
            }
            _ => {
                let token = &ctx.text[mark..];
                let hash = FxBuildHasher.hash_one(token);
                let (text, spans) = (&ctx.text, &ctx.spans);
                if ctx.index.find(hash, |&i| span_token(text, spans, i) == token).is_some() {
                    ctx.text.truncate(mark);
                    ctx.constituents.truncate(start);
                    continue;
                }
                ctx.spans.push(Span {
                    text: (mark, ctx.text.len()),
                    parts: (start, ctx.constituents.len()),
                });
                let (text, spans) = (&ctx.text, &ctx.spans);
                ctx.index.insert_unique(hash, spans.len() - 1, |&i| {
                    FxBuildHasher.hash_one(span_token(text, spans, i))
                });
            }
        }
    }
    ctx
}

/// Whitespace-separated words of `text`, with a byte-level path for ASCII input.
fn for_each_word<'a>(text: &'a str, mut f: impl FnMut(&'a str)) {
    if !text.is_ascii() {
        text.split_whitespace().for_each(f);
        return;
    }
    let bytes = text.as_bytes();
    let mut begin = None;
    for (i, b) in bytes.iter().enumerate() {
        // Same set as `char::is_whitespace` restricted to ASCII.
        let space = matches!(b, b' ' | b'\t' | b'\n' | b'\x0b' | b'\x0c' | b'\r');
        match (space, begin) {
            (true, Some(s)) => {
                f(&text[s..i]);
                begin = None;
            }
            (false, None) => begin = Some(i),
            _ => {}
        }
    }
    if let Some(s) = begin {
        f(&text[s..]);
    }
}

fn push_lowercase(out: &mut String, word: &str) {
    if !word.is_ascii() || word.bytes().any(|b| b.is_ascii_uppercase()) {
        out.push_str(&word.to_lowercase());
    } else {
        out.push_str(word);
    }
}

impl fmt::Debug for ContextSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContextSet")
            .field("scheme", &self.scheme)
            .field("word_entries", &self.word_entries)
            .field("oov_word_entries", &self.oov_word_entries)
            .field("phrases", &self.phrases().collect::<Vec<_>>())
            .field("vocab_checksum", &self.vocab_checksum)
            .finish()
    }
}

impl PartialEq for ContextSet {
    fn eq(&self, other: &Self) -> bool {
        self.scheme == other.scheme
            && self.word_entries == other.word_entries
            && self.oov_word_entries == other.oov_word_entries
            && self.phrases().eq(other.phrases())
            && self.vocab_checksum == other.vocab_checksum
    }
}

impl Eq for ContextSet {}

impl ContextSet {
    pub fn empty(vocab: &Vocabulary, scheme: Scheme) -> Self {
        Self {
            scheme,
            word_entries: BTreeSet::new(),
            oov_word_entries: BTreeSet::new(),
            text: String::new(),
            constituents: Vec::new(),
            spans: Vec::new(),
            index: HashTable::new(),
            vocab_checksum: vocab.checksum(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn word_entries(&self) -> &BTreeSet<u32> {
        &self.word_entries
    }

    pub fn oov_word_entries(&self) -> &BTreeSet<String> {
        &self.oov_word_entries
    }

    /// Multi-word phrases in first-occurrence order.
    pub fn phrases(&self) -> impl ExactSizeIterator<Item = Phrase<'_>> + '_ {
        (0..self.spans.len()).map(|i| self.phrase_at(i))
    }

    pub fn phrase_at(&self, index: usize) -> Phrase<'_> {
        let span = self.spans[index];
        Phrase {
            token: span_token(&self.text, &self.spans, index),
            constituents: &self.constituents[span.parts.0..span.parts.1],
        }
    }

    /// Index of the phrase with this joined token.
    pub fn phrase(&self, token: &str) -> Option<usize> {
        let hash = FxBuildHasher.hash_one(token);
        self.index
            .find(hash, |&i| span_token(&self.text, &self.spans, i) == token)
            .copied()
    }

    pub fn len(&self) -> usize {
        self.word_entries.len() + self.oov_word_entries.len() + self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vocab_checksum(&self) -> &str {
        &self.vocab_checksum
    }

    /// Classify a decoder surface string.
    pub fn resolve(&self, vocab: &Vocabulary, surface: &str) -> Token {
        if let Some(i) = self.phrase(surface) {
            return Token::Phrase(i);
        }
        match vocab.get(surface) {
            Some(id) => Token::Word(id),
            None => Token::Oov(surface.to_string()),
        }
    }
}

/// A decoder token as seen by the scorer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Word(u32),
    Oov(String),
    /// Index into [`ContextSet::phrases`].
    Phrase(usize),
}

/// History-free boost `s_B` of a token.
pub fn bias_score(table: &BiasTable, context: &ContextSet, config: BiasConfig, token: &Token) -> Result<f64> {
    if table.vocab_checksum != context.vocab_checksum {
        return Err(Error::Integrity(format!(
            "bias table built for vocabulary {}, context for {}",
            table.vocab_checksum, context.vocab_checksum
        )));
    }
    Ok(token_bias(table, context, config, token))
}

fn token_bias(table: &BiasTable, context: &ContextSet, config: BiasConfig, token: &Token) -> f64 {
    match token {
        Token::Word(id) if context.word_entries.contains(id) => config.lambda * table.base_bias(*id),
        Token::Oov(s) if context.oov_word_entries.contains(s) => config.alpha,
        Token::Phrase(i) => match context.scheme {
            Scheme::Oov => config.alpha,
            Scheme::Expansion => context
                .phrase_at(*i)
                .constituents()
                .iter()
                .map(|c| constituent_bias(table, config, c))
                .sum(),
        },
        _ => 0.0,
    }
}

fn constituent_bias(table: &BiasTable, config: BiasConfig, c: &Constituent) -> f64 {
    match c {
        Constituent::Word(id) => config.lambda * table.base_bias(*id),
        Constituent::Oov(_) => config.alpha,
    }
}

/// `s_G + s_B` for a token after `history` (LM ids).
pub fn combined_score(
    model: &NgramModel,
    table: &BiasTable,
    context: &ContextSet,
    config: BiasConfig,
    history: &[u32],
    token: &Token,
) -> Result<f64> {
    let scorer = Scorer::biased(model, table, context, config)?;
    let mut hist = history.to_vec();
    let mut steps = Vec::new();
    scorer.score(&mut hist, token, &mut steps);
    Ok(steps.iter().map(|s| s.lm + s.bias).sum())
}

/// One LM step inside a token: a phrase under the expansion scheme yields one
/// step per constituent, every other token exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStep {
    pub word: String,
    /// Symbol the LM saw (`<unk>` for OOV words and opaque phrases).
    pub lm_token: String,
    pub lm: f64,
    pub bias: f64,
}

struct Biasing<'a> {
    table: &'a BiasTable,
    context: &'a ContextSet,
    config: BiasConfig,
}

/// Scores decoder tokens against an LM, with or without biasing.
pub struct Scorer<'a> {
    model: &'a NgramModel,
    biasing: Option<Biasing<'a>>,
}

impl<'a> Scorer<'a> {
    /// Plain LM scoring with no bias component at all.
    pub fn lm_only(model: &'a NgramModel) -> Self {
        Self { model, biasing: None }
    }

    pub fn biased(
        model: &'a NgramModel,
        table: &'a BiasTable,
        context: &'a ContextSet,
        config: BiasConfig,
    ) -> Result<Self> {
        config.validate()?;
        let lm_sum = model.vocab().checksum();
        for (what, sum) in [
            ("bias table", table.vocab_checksum()),
            ("context", context.vocab_checksum()),
        ] {
            if sum != lm_sum {
                return Err(Error::Integrity(format!(
                    "{what} built for vocabulary {sum}, LM uses {lm_sum}"
                )));
            }
        }
        Ok(Self {
            model,
            biasing: Some(Biasing { table, context, config }),
        })
    }

    pub fn model(&self) -> &NgramModel {
        self.model
    }

    pub fn context(&self) -> Option<&ContextSet> {
        self.biasing.as_ref().map(|b| b.context)
    }

    pub fn resolve(&self, surface: &str) -> Token {
        match &self.biasing {
            Some(b) => b.context.resolve(self.model.vocab(), surface),
            None => match self.model.vocab().get(surface) {
                Some(id) => Token::Word(id),
                None => Token::Oov(surface.to_string()),
            },
        }
    }

    /// Score `token` after `history`, appending its LM steps to `steps` and
    /// the LM symbols it contributes to `history`.
    pub fn score(&self, history: &mut Vec<u32>, token: &Token, steps: &mut Vec<WordStep>) {
        let vocab = self.model.vocab();
        self.visit(history, token, |word, id, lm, bias| {
            steps.push(WordStep {
                word: word.to_string(),
                lm_token: vocab.word(id).to_string(),
                lm,
                bias,
            })
        });
    }

    /// Sum of LM and bias scores of `token` after `history`, which is extended as in [`Scorer::score`].
    pub fn score_total(&self, history: &mut Vec<u32>, token: &Token) -> f64 {
        let mut total = 0.0;
        self.visit(history, token, |_, _, lm, bias| total += lm + bias);
        total
    }

    fn visit(&self, history: &mut Vec<u32>, token: &Token, mut f: impl FnMut(&str, u32, f64, f64)) {
        let vocab = self.model.vocab();
        let unk = vocab.unk_id();
        let mut step = |history: &mut Vec<u32>, word: &str, id: u32, bias: f64| {
            let lm = self.model.score(history, id);
            history.push(id);
            f(word, id, lm, bias);
        };
        let Some(b) = &self.biasing else {
            match token {
                Token::Word(id) => step(history, vocab.word(*id), *id, 0.0),
                Token::Oov(s) => step(history, s, unk, 0.0),
                Token::Phrase(_) => unreachable!("phrase tokens only exist with a context"),
            }
            return;
        };
        match token {
            Token::Word(id) => step(
                history,
                vocab.word(*id),
                *id,
                token_bias(b.table, b.context, b.config, token),
            ),
            Token::Oov(s) => step(history, s, unk, token_bias(b.table, b.context, b.config, token)),
            Token::Phrase(i) => {
                let phrase = b.context.phrase_at(*i);
                match b.context.scheme {
                    Scheme::Oov => step(
                        history,
                        &phrase.words().collect::<Vec<_>>().join(" "),
                        unk,
                        b.config.alpha,
                    ),
                    Scheme::Expansion => {
                        for (word, c) in phrase.words().zip(phrase.constituents()) {
                            let id = match c {
                                Constituent::Word(id) => *id,
                                Constituent::Oov(_) => unk,
                            };
                            step(history, word, id, constituent_bias(b.table, b.config, c));
                        }
                    }
                }
            }
        }
    }
}

/// Surface words of a decoder token string.
pub fn expand_surface(surface: &str) -> impl Iterator<Item = &str> {
    surface.split(PHRASE_JOINER)
}
