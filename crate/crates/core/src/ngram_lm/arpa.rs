//! ARPA text format. Values on disk are base-10; the model works in natural log.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{Entry, NgramModel, MAX_ORDER};
use crate::corpus::{is_special, Vocabulary, BOS, EOS, UNK};
use crate::error::{Error, Result};

const LOG10_FLOOR: f64 = -99.0;

fn to_log10(ln: f64) -> f64 {
    if ln == f64::NEG_INFINITY {
        LOG10_FLOOR
    } else {
        ln / std::f64::consts::LN_10
    }
}

fn from_log10(log10: f64) -> f64 {
    if log10 <= LOG10_FLOOR {
        f64::NEG_INFINITY
    } else {
        log10 * std::f64::consts::LN_10
    }
}

/// Unigrams in id order, higher orders sorted by id sequence.
pub fn write_arpa<W: Write>(model: &NgramModel, mut sink: W) -> Result<()> {
    let vocab = model.vocab();
    writeln!(sink, "\\data\\")?;
    for (k, level) in model.entries().iter().enumerate() {
        writeln!(sink, "ngram {}={}", k + 1, level.len())?;
    }
    for (k, level) in model.entries().iter().enumerate() {
        writeln!(sink)?;
        writeln!(sink, "\\{}-grams:", k + 1)?;
        let mut grams: Vec<(&[u32], &Entry)> = level.iter().map(|(g, e)| (&g[..], e)).collect();
        grams.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (gram, entry) in grams {
            write!(sink, "{}\t", to_log10(entry.logprob))?;
            for (i, &id) in gram.iter().enumerate() {
                if i > 0 {
                    write!(sink, " ")?;
                }
                write!(sink, "{}", vocab.word(id))?;
            }
            if let Some(bow) = entry.backoff {
                write!(sink, "\t{}", to_log10(bow))?;
            }
            writeln!(sink)?;
        }
    }
    writeln!(sink)?;
    writeln!(sink, "\\end\\")?;
    Ok(())
}

enum Section {
    Preamble,
    Header,
    Grams(usize),
    End,
}

/// Parse an ARPA file. The vocabulary is rebuilt from the unigram section in file order.
pub fn read_arpa<R: BufRead>(source: R) -> Result<NgramModel> {
    let mut declared: Vec<usize> = Vec::new();
    let mut section = Section::Preamble;
    let mut words: Vec<String> = Vec::new();
    let mut id_of: HashMap<String, u32> = HashMap::new();
    // Entries keyed by word strings until the vocabulary is known.
    let mut unigram_rows: Vec<(String, f64, Option<f64>)> = Vec::new();
    let mut vocab: Option<Arc<Vocabulary>> = None;
    let mut entries: Vec<HashMap<Box<[u32]>, Entry>> = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            section = Section::Header;
            continue;
        }
        if line == "\\end\\" {
            section = Section::End;
            break;
        }
        if let Some(rest) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
            let k: usize = rest
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad section header {line:?}")))?;
            if k == 0 || k > declared.len() {
                return Err(Error::parse(lineno, format!("section {k} not declared in header")));
            }
            if k != entries.len() + 1 {
                return Err(Error::parse(lineno, format!("section {k} out of order")));
            }
            if k == 2 {
                vocab = Some(finish_unigrams(
                    &mut words,
                    &mut id_of,
                    &unigram_rows,
                    &mut entries,
                    lineno,
                )?);
            }
            entries.push(HashMap::with_capacity(declared[k - 1]));
            section = Section::Grams(k);
            continue;
        }
        match section {
            Section::Preamble => continue,
            Section::End => break,
            Section::Header => {
                let body = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| Error::parse(lineno, format!("unexpected header line {line:?}")))?;
                let (k, n) = body
                    .split_once('=')
                    .ok_or_else(|| Error::parse(lineno, "expected ngram N=count"))?;
                let k: usize = k
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(lineno, "bad order in header"))?;
                let n: i64 = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(lineno, "bad count in header"))?;
                if n < 0 {
                    return Err(Error::parse(lineno, format!("negative count {n} for order {k}")));
                }
                if k != declared.len() + 1 || k > MAX_ORDER {
                    return Err(Error::parse(lineno, format!("unexpected order {k} in header")));
                }
                declared.push(n as usize);
            }
            Section::Grams(k) => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != k + 1 && fields.len() != k + 2 {
                    return Err(Error::parse(lineno, format!("expected {k} words plus scores")));
                }
                let logprob = parse_num(fields[0], lineno)?;
                let backoff = match fields.get(k + 1) {
                    Some(f) => Some(parse_num(f, lineno)?),
                    None => None,
                };
                if k == 1 {
                    unigram_rows.push((fields[1].to_string(), from_log10(logprob), backoff.map(from_log10)));
                    continue;
                }
                let v = vocab.as_ref().expect("vocabulary built before higher orders");
                let mut gram = Vec::with_capacity(k);
                for w in &fields[1..=k] {
                    let id = v
                        .symbol_id(w)
                        .ok_or_else(|| Error::parse(lineno, format!("word {w:?} missing from unigrams")))?;
                    gram.push(id);
                }
                entries[k - 1].insert(
                    gram.into_boxed_slice(),
                    Entry {
                        logprob: from_log10(logprob),
                        backoff: backoff.map(from_log10),
                    },
                );
            }
        }
    }

    if !matches!(section, Section::End) {
        return Err(Error::parse(0, "missing \\end\\ marker"));
    }
    if declared.is_empty() {
        return Err(Error::parse(0, "missing \\data\\ header"));
    }
    let vocab = match vocab {
        Some(v) => v,
        None => finish_unigrams(&mut words, &mut id_of, &unigram_rows, &mut entries, 0)?,
    };
    if entries.len() != declared.len() {
        return Err(Error::parse(
            0,
            format!("header declares {} orders, found {}", declared.len(), entries.len()),
        ));
    }
    for (k, (level, &n)) in entries.iter().zip(&declared).enumerate() {
        if level.len() != n {
            return Err(Error::parse(
                0,
                format!("order {} declares {n} n-grams, found {}", k + 1, level.len()),
            ));
        }
    }
    Ok(NgramModel::from_parts(declared.len(), vocab, entries))
}

fn parse_num(field: &str, lineno: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(lineno, format!("bad number {field:?}")))
}

fn finish_unigrams(
    words: &mut Vec<String>,
    id_of: &mut HashMap<String, u32>,
    rows: &[(String, f64, Option<f64>)],
    entries: &mut [HashMap<Box<[u32]>, Entry>],
    lineno: usize,
) -> Result<Arc<Vocabulary>> {
    for (w, _, _) in rows {
        if !is_special(w) {
            if id_of.contains_key(w) {
                return Err(Error::parse(lineno, format!("duplicate unigram {w:?}")));
            }
            id_of.insert(w.clone(), words.len() as u32);
            words.push(w.clone());
        }
    }
    for special in [UNK, BOS, EOS] {
        if !rows.iter().any(|(w, _, _)| w == special) {
            return Err(Error::parse(lineno, format!("unigram section lacks {special}")));
        }
    }
    let counts = vec![0; words.len()];
    let vocab = Arc::new(Vocabulary::from_ranked(std::mem::take(words), counts, 0, 0)?);
    let level = entries
        .first_mut()
        .ok_or_else(|| Error::parse(lineno, "missing unigram section"))?;
    for (w, logprob, backoff) in rows {
        let id = vocab.symbol_id(w).expect("every unigram registered");
        level.insert(
            vec![id].into_boxed_slice(),
            Entry {
                logprob: *logprob,
                backoff: *backoff,
            },
        );
    }
    Ok(vocab)
}
