//! Windowed greedy agglomerative Brown clustering.
//!
//! Words enter in frequency order. The first `C` words seed singleton
//! clusters; every later word is added as an extra cluster and the pair whose
//! merge loses the least average mutual information is merged, keeping the
//! active set at `C`.
//!
//! The loss of merging `c` and `d` is kept as
//!
//! ```text
//! loss(c, d) = s(c) + s(d) - q(c, d) - q(d, c) - after(c, d)
//! ```
//!
//! where `q(x, y) = p(x, y) log(p(x, y) / (pl(x) pr(y)))`, `s(x)` is the sum of
//! `q` over `x`'s row and column, and `after(c, d)` is the sum of the merged
//! cluster's `q` terms. Only `after` needs per-pair state; it is patched in
//! O(1) per pair whenever a cluster is added or two clusters merge.

use rayon::prelude::*;

/// Word-word bigram statistics restricted to the clustered words.
pub(crate) struct BigramGraph {
    /// Outgoing `(neighbour, count)` per word.
    pub out: Vec<Vec<(u32, f64)>>,
    /// Incoming `(neighbour, count)` per word.
    pub inc: Vec<Vec<(u32, f64)>>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub total: f64,
}

#[inline]
fn q(n: f64, l: f64, r: f64, total: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        n / total * (n * total / (l * r)).ln()
    }
}

struct State<'a> {
    graph: &'a BigramGraph,
    cap: usize,
    active: usize,
    members: Vec<Vec<u32>>,
    slot_of: Vec<Option<usize>>,
    /// Cluster-cluster bigram counts, `cap x cap`.
    n: Vec<f64>,
    lc: Vec<f64>,
    rc: Vec<f64>,
    qm: Vec<f64>,
    s: Vec<f64>,
    /// `after(c, d)` for `c < d`.
    after: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(graph: &'a BigramGraph, cap: usize, num_words: usize) -> Self {
        Self {
            graph,
            cap,
            active: 0,
            members: vec![Vec::new(); cap],
            slot_of: vec![None; num_words],
            n: vec![0.0; cap * cap],
            lc: vec![0.0; cap],
            rc: vec![0.0; cap],
            qm: vec![0.0; cap * cap],
            s: vec![0.0; cap],
            after: vec![0.0; cap * cap],
        }
    }

    #[inline]
    fn n(&self, x: usize, y: usize) -> f64 {
        self.n[x * self.cap + y]
    }

    #[inline]
    fn qf(&self, n: f64, l: f64, r: f64) -> f64 {
        q(n, l, r, self.graph.total)
    }

    fn refresh_s(&mut self) {
        let (m, cap) = (self.active, self.cap);
        for x in 0..m {
            let mut acc = 0.0;
            for y in 0..m {
                acc += self.qm[x * cap + y] + self.qm[y * cap + x];
            }
            self.s[x] = acc - self.qm[x * cap + x];
        }
    }

    fn refresh_q_for(&mut self, z: usize) {
        let (m, cap) = (self.active, self.cap);
        for x in 0..m {
            self.qm[z * cap + x] = self.qf(self.n(z, x), self.lc[z], self.rc[x]);
            self.qm[x * cap + z] = self.qf(self.n(x, z), self.lc[x], self.rc[z]);
        }
    }

    /// Direct O(active) evaluation of `after(c, d)`.
    fn after_direct(&self, c: usize, d: usize) -> f64 {
        let lcd = self.lc[c] + self.lc[d];
        let rcd = self.rc[c] + self.rc[d];
        let self_n = self.n(c, c) + self.n(c, d) + self.n(d, c) + self.n(d, d);
        let mut acc = self.qf(self_n, lcd, rcd);
        for x in 0..self.active {
            if x == c || x == d {
                continue;
            }
            acc += self.qf(self.n(c, x) + self.n(d, x), lcd, self.rc[x]);
            acc += self.qf(self.n(x, c) + self.n(x, d), self.lc[x], rcd);
        }
        acc
    }

    fn loss(&self, c: usize, d: usize) -> f64 {
        let cap = self.cap;
        self.s[c] + self.s[d] - self.qm[c * cap + d] - self.qm[d * cap + c] - self.after[c * cap + d]
    }

    /// Add `word` as a new singleton cluster in the next free slot.
    fn add_word(&mut self, word: u32) {
        let z = self.active;
        let cap = self.cap;
        self.active += 1;
        self.members[z] = vec![word];
        self.slot_of[word as usize] = Some(z);
        for i in 0..cap {
            self.n[z * cap + i] = 0.0;
            self.n[i * cap + z] = 0.0;
        }
        for &(y, c) in &self.graph.out[word as usize] {
            if let Some(sy) = self.slot_of[y as usize] {
                self.n[z * cap + sy] += c;
            }
        }
        for &(y, c) in &self.graph.inc[word as usize] {
            if let Some(sy) = self.slot_of[y as usize] {
                // A self-loop was already counted through the outgoing list.
                if sy != z {
                    self.n[sy * cap + z] += c;
                }
            }
        }
        self.lc[z] = self.graph.left[word as usize];
        self.rc[z] = self.graph.right[word as usize];
        self.refresh_q_for(z);
        self.refresh_s();

        // Existing pairs gain the x = z terms.
        let this = &*self;
        let updates: Vec<(usize, Vec<f64>)> = (0..z)
            .into_par_iter()
            .map(|c| {
                let row: Vec<f64> = (c + 1..z)
                    .map(|d| {
                        let lcd = this.lc[c] + this.lc[d];
                        let rcd = this.rc[c] + this.rc[d];
                        this.qf(this.n(c, z) + this.n(d, z), lcd, this.rc[z])
                            + this.qf(this.n(z, c) + this.n(z, d), this.lc[z], rcd)
                    })
                    .collect();
                (c, row)
            })
            .collect();
        for (c, row) in updates {
            for (k, delta) in row.into_iter().enumerate() {
                self.after[c * cap + c + 1 + k] += delta;
            }
        }
        let fresh: Vec<f64> = (0..z).into_par_iter().map(|c| self.after_direct(c, z)).collect();
        for (c, v) in fresh.into_iter().enumerate() {
            self.after[c * cap + z] = v;
        }
    }

    /// Lowest-loss pair, ties to the smallest `(a, b)`.
    fn best_pair(&self) -> (usize, usize) {
        let m = self.active;
        let rows: Vec<Option<(f64, usize, usize)>> = (0..m)
            .into_par_iter()
            .map(|c| {
                let mut best: Option<(f64, usize, usize)> = None;
                for d in c + 1..m {
                    let l = self.loss(c, d);
                    if best.is_none_or(|(bl, _, _)| l < bl) {
                        best = Some((l, c, d));
                    }
                }
                best
            })
            .collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for r in rows.into_iter().flatten() {
            if best.is_none_or(|(bl, _, _)| r.0 < bl) {
                best = Some(r);
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        (a, b)
    }

    fn merge(&mut self, a: usize, b: usize) {
        debug_assert!(a < b);
        let (m, cap) = (self.active, self.cap);

        // Pairs disjoint from {a, b}: swap the x = a, x = b terms for x = ab.
        let this = &*self;
        let lab = this.lc[a] + this.lc[b];
        let rab = this.rc[a] + this.rc[b];
        let updates: Vec<(usize, Vec<(usize, f64)>)> = (0..m)
            .into_par_iter()
            .filter(|&c| c != a && c != b)
            .map(|c| {
                let row = (c + 1..m)
                    .filter(|&d| d != a && d != b)
                    .map(|d| {
                        let lcd = this.lc[c] + this.lc[d];
                        let rcd = this.rc[c] + this.rc[d];
                        let cd_a_out = this.n(c, a) + this.n(d, a);
                        let cd_b_out = this.n(c, b) + this.n(d, b);
                        let a_cd_in = this.n(a, c) + this.n(a, d);
                        let b_cd_in = this.n(b, c) + this.n(b, d);
                        let old = this.qf(cd_a_out, lcd, this.rc[a])
                            + this.qf(a_cd_in, this.lc[a], rcd)
                            + this.qf(cd_b_out, lcd, this.rc[b])
                            + this.qf(b_cd_in, this.lc[b], rcd);
                        let new = this.qf(cd_a_out + cd_b_out, lcd, rab) + this.qf(a_cd_in + b_cd_in, lab, rcd);
                        (d, new - old)
                    })
                    .collect();
                (c, row)
            })
            .collect();
        for (c, row) in updates {
            for (d, delta) in row {
                self.after[c * cap + d] += delta;
            }
        }

        // Fold b into a.
        let self_ab = self.n(a, a) + self.n(a, b) + self.n(b, a) + self.n(b, b);
        for x in 0..m {
            self.n[a * cap + x] += self.n[b * cap + x];
            self.n[x * cap + a] += self.n[x * cap + b];
        }
        self.n[a * cap + a] = self_ab;
        self.lc[a] = lab;
        self.rc[a] = rab;
        let moved = std::mem::take(&mut self.members[b]);
        for &w in &moved {
            self.slot_of[w as usize] = Some(a);
        }
        self.members[a].extend(moved);

        // Move the last slot into the hole at b.
        let last = m - 1;
        if b != last {
            for x in 0..m {
                self.n[b * cap + x] = self.n[last * cap + x];
                self.qm[b * cap + x] = self.qm[last * cap + x];
            }
            for x in 0..m {
                self.n[x * cap + b] = self.n[x * cap + last];
                self.qm[x * cap + b] = self.qm[x * cap + last];
            }
            self.n[b * cap + b] = self.n[last * cap + last];
            self.qm[b * cap + b] = self.qm[last * cap + last];
            // after is upper-triangular: relocate every pair that involved `last`.
            for x in 0..last {
                if x == b {
                    continue;
                }
                let v = self.after[x * cap + last];
                let (lo, hi) = if x < b { (x, b) } else { (b, x) };
                self.after[lo * cap + hi] = v;
            }
            self.lc[b] = self.lc[last];
            self.rc[b] = self.rc[last];
            let moved = std::mem::take(&mut self.members[last]);
            for &w in &moved {
                self.slot_of[w as usize] = Some(b);
            }
            self.members[b] = moved;
        }
        self.active -= 1;

        // The merged cluster's own rows are recomputed from scratch.
        self.refresh_q_for(a);
        self.refresh_s();
        let m = self.active;
        let fresh: Vec<(usize, f64)> = (0..m)
            .into_par_iter()
            .filter(|&x| x != a)
            .map(|x| {
                let (lo, hi) = if x < a { (x, a) } else { (a, x) };
                (lo * cap + hi, self.after_direct(lo, hi))
            })
            .collect();
        for (idx, v) in fresh {
            self.after[idx] = v;
        }
    }
}

/// Final window clusters plus the merges that continue from them down to one cluster.
pub(crate) struct GreedyRun {
    /// Member lists of the clusters left once every word has entered.
    pub clusters: Vec<Vec<u32>>,
    /// Subsequent merges as `(kept, absorbed)` indices into `clusters`.
    pub tail: Vec<(usize, usize)>,
}

/// Cluster `order` (words sorted by descending frequency) with a window of `window` clusters.
/// With `with_tail`, keep merging past the window and record the merge sequence.
pub(crate) fn greedy_clusters(graph: &BigramGraph, order: &[u32], window: usize, with_tail: bool) -> GreedyRun {
    let cap = window + 1;
    let mut state = State::new(graph, cap, graph.out.len());
    for &w in order {
        state.add_word(w);
        if state.active > window {
            let (a, b) = state.best_pair();
            state.merge(a, b);
        }
    }
    let clusters: Vec<Vec<u32>> = state.members[..state.active].to_vec();
    let mut tail = Vec::new();
    if with_tail {
        let mut label: Vec<usize> = (0..state.active).collect();
        while state.active > 1 {
            let (a, b) = state.best_pair();
            tail.push((label[a], label[b]));
            let last = state.active - 1;
            state.merge(a, b);
            if b != last {
                label[b] = label[last];
            }
            label.truncate(state.active);
        }
    }
    GreedyRun { clusters, tail }
}

/// Average mutual information of adjacent clusters under a word→cluster map.
pub(crate) fn ami(graph: &BigramGraph, cluster_of: &[Option<usize>], num_clusters: usize) -> f64 {
    if graph.total <= 0.0 {
        return 0.0;
    }
    let mut n = vec![0.0; num_clusters * num_clusters];
    let mut l = vec![0.0; num_clusters];
    let mut r = vec![0.0; num_clusters];
    for (w, outs) in graph.out.iter().enumerate() {
        let Some(cw) = cluster_of[w] else { continue };
        for &(y, c) in outs {
            if let Some(cy) = cluster_of[y as usize] {
                n[cw * num_clusters + cy] += c;
                l[cw] += c;
                r[cy] += c;
            }
        }
    }
    let mut acc = 0.0;
    for x in 0..num_clusters {
        for y in 0..num_clusters {
            acc += q(n[x * num_clusters + y], l[x], r[y], graph.total);
        }
    }
    acc
}
