use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ConfusionLattice;
use crate::bias::{expand_surface, Scorer, Token, WordStep};

/// One decoder token on the best path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Surface words, space separated.
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub acoustic: f64,
    pub steps: Vec<WordStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub total_score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceStep>,
    /// LM score of the sentence end.
    pub end_score: f64,
}

impl Hypothesis {
    /// Acoustic, LM and bias components of the trace plus the sentence end, summed.
    pub fn component_sum(&self) -> f64 {
        let body: f64 = self
            .trace
            .iter()
            .map(|t| t.acoustic + t.steps.iter().map(|s| s.lm + s.bias).sum::<f64>())
            .sum();
        body + self.end_score
    }
}

struct Edge {
    start: usize,
    end: usize,
    surface: String,
    token: Token,
    acoustic: f64,
    words: Vec<Arc<str>>,
}

#[derive(Clone)]
struct Hyp {
    score: f64,
    history: Vec<u32>,
    words: Vec<Arc<str>>,
    node: Option<usize>,
}

/// Higher score first, then lexicographically smaller word sequence.
fn rank(a: &Hyp, b: &Hyp) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.words.cmp(&b.words))
}

fn keep_better(slot: &mut Hyp, h: Hyp) {
    if rank(&h, slot) == Ordering::Less {
        *slot = h;
    }
}

/// Collapse identical transcriptions and identical LM states, then keep the best `beam`.
fn prune(hyps: Vec<Hyp>, beam: usize) -> Vec<Hyp> {
    let mut by_surface: HashMap<Vec<Arc<str>>, Hyp> = HashMap::with_capacity(hyps.len());
    for h in hyps {
        match by_surface.get_mut(&h.words) {
            Some(slot) => keep_better(slot, h),
            None => {
                by_surface.insert(h.words.clone(), h);
            }
        }
    }
    let mut by_state: HashMap<Vec<u32>, Hyp> = HashMap::with_capacity(by_surface.len());
    for h in by_surface.into_values() {
        match by_state.get_mut(&h.history) {
            Some(slot) => keep_better(slot, h),
            None => {
                by_state.insert(h.history.clone(), h);
            }
        }
    }
    let mut out: Vec<Hyp> = by_state.into_values().collect();
    out.sort_by(rank);
    out.truncate(beam);
    out
}

fn edges(lattice: &ConfusionLattice, scorer: &Scorer) -> Vec<Vec<Edge>> {
    let mut from: Vec<Vec<Edge>> = (0..lattice.slots.len()).map(|_| Vec::new()).collect();
    for (i, slot) in lattice.slots.iter().enumerate() {
        for (cand, acoustic) in slot {
            let words = expand_surface(cand).map(Arc::from).collect();
            from[i].push(Edge {
                start: i,
                end: i + 1,
                surface: cand.clone(),
                token: scorer.resolve(cand),
                acoustic: *acoustic,
                words,
            });
        }
    }
    for arc in &lattice.arcs {
        let surface = arc.token();
        // An arc only means something for a phrase of the active context.
        let token = scorer.resolve(&surface);
        if !matches!(token, Token::Phrase(_)) {
            continue;
        }
        from[arc.start].push(Edge {
            start: arc.start,
            end: arc.start + arc.len,
            surface,
            token,
            acoustic: arc.acoustic,
            words: arc.words.iter().map(|w| Arc::from(w.as_str())).collect(),
        });
    }
    from
}

/// Left-to-right beam search maximizing acoustic plus LM plus bias scores.
///
/// Hypotheses reaching the same slot boundary with the same transcription, or
/// the same LM state, are merged keeping the better one. Ties go to the
/// lexicographically smaller word sequence. `<s>` and `</s>` are scored but
/// never emitted.
pub fn beam_decode(lattice: &ConfusionLattice, scorer: &Scorer, beam_width: usize) -> Hypothesis {
    let beam = beam_width.max(1);
    let model = scorer.model();
    let keep = model.order().saturating_sub(1);
    let vocab = model.vocab();
    let edges = edges(lattice, scorer);
    let n = lattice.slots.len();
    // Back-pointers: (parent node, position and index of the edge taken).
    let mut nodes: Vec<(Option<usize>, usize, usize)> = Vec::new();
    let mut buckets: Vec<Vec<Hyp>> = (0..=n).map(|_| Vec::new()).collect();
    buckets[0].push(Hyp {
        score: 0.0,
        history: vec![vocab.bos_id()],
        words: Vec::new(),
        node: None,
    });
    for i in 0..n {
        let live = prune(std::mem::take(&mut buckets[i]), beam);
        for h in &live {
            for (e_idx, e) in edges[i].iter().enumerate() {
                let mut history = h.history.clone();
                let gain = scorer.score_total(&mut history, &e.token);
                if history.len() > keep {
                    history.drain(..history.len() - keep);
                }
                nodes.push((h.node, i, e_idx));
                let mut words = h.words.clone();
                words.extend(e.words.iter().cloned());
                buckets[e.end].push(Hyp {
                    score: h.score + e.acoustic + gain,
                    history,
                    words,
                    node: Some(nodes.len() - 1),
                });
            }
        }
    }
    let mut finals = std::mem::take(&mut buckets[n]);
    for h in &mut finals {
        h.score += model.score(&h.history, vocab.eos_id());
    }
    let best = prune(finals, 1).pop().expect("every slot has a candidate");

    let mut path = Vec::new();
    let mut cur = best.node;
    while let Some(k) = cur {
        let (parent, pos, e_idx) = nodes[k];
        path.push(&edges[pos][e_idx]);
        cur = parent;
    }
    path.reverse();
    let mut history = vec![vocab.bos_id()];
    let mut trace = Vec::with_capacity(path.len());
    for e in path {
        let mut steps = Vec::new();
        scorer.score(&mut history, &e.token, &mut steps);
        trace.push(TraceStep {
            token: expand_surface(&e.surface).collect::<Vec<_>>().join(" "),
            start: e.start,
            end: e.end,
            acoustic: e.acoustic,
            steps,
        });
    }
    let end_score = model.score(&history, vocab.eos_id());
    Hypothesis {
        tokens: best.words.iter().map(|w| w.to_string()).collect(),
        total_score: best.score,
        trace,
        end_score,
    }
}
