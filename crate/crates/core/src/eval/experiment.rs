use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_oracle_context, sample_distractors, top_common_words, wer, WerStats};
use crate::bias::{compile_context, BiasConfig, BiasTable, ContextSet, Scheme, Scorer};
use crate::corpus::NgramCounts;
use crate::decode_sim::{beam_decode, inject_context_arcs, touches_context, ConfusionLattice, Hypothesis, NoiseConfig};
use crate::error::{Error, Result};
use crate::ngram_lm::NgramModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Channel settings used when injecting context entries.
    pub noise: NoiseConfig,
    pub beam: usize,
    pub max_phrase_len: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            noise: NoiseConfig::default(),
            beam: 8,
            max_phrase_len: 3,
        }
    }
}

/// Test lattices with their baseline decode and the contexts derived from it.
pub struct Bench {
    model: NgramModel,
    lattices: Vec<ConfusionLattice>,
    config: BenchConfig,
    baseline: Vec<Hypothesis>,
    with_error: Vec<usize>,
    oracle: Vec<Vec<String>>,
    unigrams: NgramCounts,
}

impl Bench {
    /// Decode every lattice without biasing and split the set by baseline errors.
    pub fn new(model: NgramModel, lattices: Vec<ConfusionLattice>, config: BenchConfig) -> Result<Self> {
        config.noise.validate()?;
        if lattices.is_empty() {
            return Err(Error::EmptyCorpus("no test lattices".into()));
        }
        let scorer = Scorer::lm_only(&model);
        let baseline: Vec<Hypothesis> = lattices
            .par_iter()
            .map(|l| beam_decode(l, &scorer, config.beam))
            .collect();
        let mut with_error = Vec::new();
        let mut oracle = Vec::with_capacity(lattices.len());
        for (i, (l, h)) in lattices.iter().zip(&baseline).enumerate() {
            if wer(&l.reference, &h.tokens)?.errors() > 0 {
                with_error.push(i);
            }
            oracle.push(extract_oracle_context(&l.reference, &h.tokens, config.max_phrase_len));
        }
        let vocab = model.vocab();
        let mut unigrams = NgramCounts::new(1);
        let map: HashMap<Vec<u32>, u64> = (0..vocab.len() as u32).map(|w| (vec![w], vocab.count(w))).collect();
        let total = map.values().sum();
        unigrams.replace(map, total);
        Ok(Self {
            model,
            lattices,
            config,
            baseline,
            with_error,
            oracle,
            unigrams,
        })
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    pub fn lattices(&self) -> &[ConfusionLattice] {
        &self.lattices
    }

    pub fn config(&self) -> &BenchConfig {
        &self.config
    }

    pub fn baseline(&self) -> &[Hypothesis] {
        &self.baseline
    }

    /// Indices of utterances the baseline got wrong.
    pub fn with_error(&self) -> &[usize] {
        &self.with_error
    }

    /// Per-utterance oracle context phrases.
    pub fn oracle_context(&self, utterance: usize) -> &[String] {
        &self.oracle[utterance]
    }

    pub fn subset(&self, subset: Subset) -> Vec<usize> {
        match subset {
            Subset::WithError => self.with_error.clone(),
            Subset::WithoutError => {
                let err: HashSet<usize> = self.with_error.iter().copied().collect();
                (0..self.lattices.len()).filter(|i| !err.contains(i)).collect()
            }
            Subset::All => (0..self.lattices.len()).collect(),
        }
    }

    /// Every 1-3 word phrase of the test references, in first-occurrence order.
    pub fn phrase_pool(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut pool = Vec::new();
        for l in &self.lattices {
            for n in 1..=3 {
                for w in l.reference.windows(n) {
                    let p = w.join(" ");
                    if seen.insert(p.clone()) {
                        pool.push(p);
                    }
                }
            }
        }
        pool
    }

    /// Distractors drawn from the test references, avoiding every with-error transcript.
    pub fn distractors(&self, n: usize, seed: u64) -> Result<Vec<String>> {
        let protected: Vec<Vec<String>> = self
            .with_error
            .iter()
            .map(|&i| self.lattices[i].reference.clone())
            .collect();
        sample_distractors(&self.phrase_pool(), &protected, n, seed)
    }

    pub fn common_words(&self, pool_size: usize, n: usize, seed: u64) -> Result<Vec<String>> {
        top_common_words(&self.unigrams, self.model.vocab(), pool_size, n, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "distractors")]
    Distractors,
    #[serde(rename = "oracle+distractors")]
    OracleDistractors,
    #[serde(rename = "adversarial")]
    Adversarial,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Baseline => "baseline",
            Condition::Oracle => "oracle",
            Condition::Distractors => "distractors",
            Condition::OracleDistractors => "oracle+distractors",
            Condition::Adversarial => "adversarial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    WithError,
    WithoutError,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub condition: Condition,
    pub scheme: Scheme,
    pub lambda: f64,
    pub alpha: f64,
    /// Number of distractor phrases for the distractor conditions.
    pub distractors: usize,
    /// Adversarial context: `adversarial_count` words drawn from the `adversarial_pool` most frequent.
    pub adversarial_pool: usize,
    pub adversarial_count: usize,
    pub seed: u64,
    pub subset: Subset,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            condition: Condition::Baseline,
            scheme: Scheme::Expansion,
            lambda: 1.0,
            alpha: 5.0,
            distractors: 0,
            adversarial_pool: 1000,
            adversarial_count: 100,
            seed: 0,
            subset: Subset::WithError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub index: usize,
    pub stats: WerStats,
    pub hypothesis: Vec<String>,
    /// Output differs from the baseline decode.
    pub changed: bool,
    /// Some lattice candidate or arc is a context entry.
    pub touched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    pub scheme: Scheme,
    pub lambda: f64,
    pub alpha: f64,
    pub num_classes: usize,
    pub distractors: usize,
    pub seed: u64,
    pub subset: Subset,
    pub utterances: Vec<UtteranceResult>,
    pub totals: WerStats,
    /// Corpus-level WER: all errors over all reference words.
    pub wer: f64,
}

impl EvalReport {
    /// Utterances whose output changed although no context entry reached their lattice.
    pub fn untouched_changes(&self) -> usize {
        self.utterances.iter().filter(|u| u.changed && !u.touched).count()
    }
}

/// Decode one condition over the chosen subset and aggregate corpus-level WER.
pub fn run_experiment(bench: &Bench, table: &BiasTable, config: &ExperimentConfig) -> Result<EvalReport> {
    let bias = BiasConfig::new(config.lambda, config.alpha)?;
    let vocab = bench.model.vocab();
    if table.vocab_checksum() != vocab.checksum() {
        return Err(Error::Integrity(format!(
            "bias table built for vocabulary {}, LM uses {}",
            table.vocab_checksum(),
            vocab.checksum()
        )));
    }
    let shared: Vec<String> = match config.condition {
        Condition::Baseline | Condition::Oracle => Vec::new(),
        Condition::Distractors | Condition::OracleDistractors => bench.distractors(config.distractors, config.seed)?,
        Condition::Adversarial => bench.common_words(config.adversarial_pool, config.adversarial_count, config.seed)?,
    };
    let with_oracle = matches!(config.condition, Condition::Oracle | Condition::OracleDistractors);
    let shared_ctx = compile_context(&shared, vocab, config.scheme);
    let indices = bench.subset(config.subset);
    let utterances: Vec<UtteranceResult> = indices
        .par_iter()
        .map(|&i| -> Result<UtteranceResult> {
            let ctx: ContextSet = if with_oracle {
                let mut phrases = bench.oracle[i].clone();
                phrases.extend(shared.iter().cloned());
                compile_context(&phrases, vocab, config.scheme)
            } else {
                shared_ctx.clone()
            };
            let lattice = inject_context_arcs(&bench.lattices[i], &ctx, &bench.config.noise);
            let scorer = Scorer::biased(&bench.model, table, &ctx, bias)?;
            let hyp = beam_decode(&lattice, &scorer, bench.config.beam);
            let stats = wer(&lattice.reference, &hyp.tokens)?;
            Ok(UtteranceResult {
                index: i,
                stats,
                changed: hyp.tokens != bench.baseline[i].tokens,
                touched: touches_context(&lattice, &ctx, vocab),
                hypothesis: hyp.tokens,
            })
        })
        .collect::<Result<_>>()?;
    let mut totals = WerStats::default();
    for u in &utterances {
        totals += u.stats;
    }
    Ok(EvalReport {
        condition: config.condition,
        scheme: config.scheme,
        lambda: config.lambda,
        alpha: config.alpha,
        num_classes: table.num_classes(),
        distractors: shared.len(),
        seed: config.seed,
        subset: config.subset,
        utterances,
        totals,
        wer: if totals.reference_length == 0 {
            0.0
        } else {
            totals.wer()
        },
    })
}

/// CSV with one row per report: `scheme,condition,num_classes,distractors,lambda,alpha,wer`.
pub fn grid_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("scheme,condition,num_classes,distractors,lambda,alpha,wer\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            r.scheme, r.condition, r.num_classes, r.distractors, r.lambda, r.alpha, r.wer
        ));
    }
    out
}
