//! Weighted bipartite graph between the unlabeled and labeled histogram sets,
//! and the solvers that pick a matching on it.
//!
//! * A1: minimum-weight maximal matching. Complete graphs use the Hungarian
//!   algorithm on the rectangular cost matrix; pruned graphs go through the
//!   flow solver below.
//! * A2: minimum-weight matching of fixed cardinality `r`, by successive
//!   shortest augmenting paths with node potentials stopped after `r`
//!   augmentations.
//! * An exhaustive oracle for small instances and a greedy approximation.
//!
//! Absent edges cost the graph's `missing` weight, which is never smaller
//! than any stored weight. The flow solver works on costs shifted down by
//! `missing`, so absent edges cost zero and every stored edge is
//! non-positive. An optimal matching of size `r` on the full graph is then an
//! optimal matching of size at most `r` on the stored edges, padded with
//! arbitrary absent pairs; the absent pairs are never materialized.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::{Alphabet, HistogramSet, LocationId};
use crate::metrics::{shannon_entropy, MetricKind, Ranked, Weight};

/// Absolute tolerance on total weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Largest side the brute-force oracle accepts.
pub const ORACLE_LIMIT: usize = 8;

// Shortest augmenting paths whose shifted cost is above this are not taken.
const IMPROVEMENT_EPS: f64 = 1e-12;

/// A1 uses the dense solver once at least 1 / DENSE_FRACTION of all pairs
/// carry an edge.
const DENSE_FRACTION: usize = 4;

/// Sparse cost structure: one row per left node, sorted by right index.
#[derive(Debug, Clone)]
pub struct WeightGraph {
    n_left: usize,
    n_right: usize,
    rows: Vec<Vec<(usize, f64)>>,
    missing: f64,
    complete: bool,
}

impl WeightGraph {
    /// Complete graph from a dense row-major matrix.
    pub fn from_dense(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n_right = matrix.first().map_or(0, Vec::len);
        if matrix.iter().any(|r| r.len() != n_right) {
            return Err(Error::InvalidInput("ragged weight matrix".into()));
        }
        let missing = matrix.iter().flatten().copied().fold(0.0, f64::max);
        let rows = matrix
            .into_iter()
            .map(|r| r.into_iter().enumerate().collect())
            .collect();
        Self::from_sparse(n_right, rows, missing)
    }

    /// Graph from per-left-node edge lists. Pairs that are not listed cost
    /// `missing`, which must be at least every listed weight.
    pub fn from_sparse(n_right: usize, mut rows: Vec<Vec<(usize, f64)>>, missing: f64) -> Result<Self> {
        if !missing.is_finite() {
            return Err(Error::InvalidInput(format!("missing-edge weight {missing}")));
        }
        let mut n_edges = 0;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidInput(format!("duplicate edge ({i}, {})", w[0].0)));
                }
            }
            for &(j, c) in row.iter() {
                if j >= n_right {
                    return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range")));
                }
                if !c.is_finite() || c > missing {
                    return Err(Error::InvalidInput(format!(
                        "edge ({i}, {j}) weight {c} exceeds missing-edge weight {missing}"
                    )));
                }
            }
            n_edges += row.len();
        }
        let n_left = rows.len();
        Ok(WeightGraph { n_left, n_right, rows, missing, complete: n_edges == n_left * n_right })
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn missing_weight(&self) -> f64 {
        self.missing
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Weight of pair `(i, j)`, or the missing weight when the edge is absent.
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        if self.complete {
            return row[j].1;
        }
        row.binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| row[p].1)
            .unwrap_or(self.missing)
    }

    /// Minimum-weight maximal matching (A1). Requires `n_left <= n_right`.
    pub fn min_weight_maximal(&self) -> Result<MatchResult> {
        if self.n_left > self.n_right {
            return Err(Error::SwapSides { left: self.n_left, right: self.n_right });
        }
        // Absent pairs are filled in at the missing weight once the graph is
        // dense enough for the O(n² m) dense solver to win.
        let assignment = if self.complete || self.edge_count() * DENSE_FRACTION >= self.n_left * self.n_right {
            self.hungarian()
        } else {
            self.successive_shortest_paths(self.n_left)
        };
        Ok(self.result(assignment, Algorithm::A1))
    }

    /// Minimum-weight matching with exactly `r` pairs (A2).
    pub fn min_weight_cardinality(&self, r: usize) -> Result<MatchResult> {
        let max = self.n_left.min(self.n_right);
        if r == 0 || r > max {
            return Err(Error::InvalidCardinality { r, max });
        }
        let assignment = self.successive_shortest_paths(r);
        Ok(self.result(assignment, Algorithm::A2(r)))
    }

    /// Exhaustive search over all matchings with `r` pairs (default: maximal).
    pub fn brute_force(&self, r: Option<usize>) -> Result<MatchResult> {
        if self.n_left > ORACLE_LIMIT || self.n_right > ORACLE_LIMIT {
            return Err(Error::TooLargeForOracle {
                left: self.n_left,
                right: self.n_right,
                limit: ORACLE_LIMIT,
            });
        }
        let max = self.n_left.min(self.n_right);
        let r = r.unwrap_or(max);
        if r > max {
            return Err(Error::InvalidCardinality { r, max });
        }
        let mut search = BruteForce {
            graph: self,
            used: vec![false; self.n_right],
            current: Vec::with_capacity(r),
            best: None,
        };
        search.descend(0, r, 0.0);
        let (_, pairs) = search.best.expect("a matching of size <= min(N, N') always exists");
        Ok(self.result(pairs, Algorithm::BruteForce))
    }

    /// Picks the globally cheapest remaining edge until one side is exhausted.
    pub fn greedy(&self) -> MatchResult {
        let mut edges: Vec<(f64, usize, usize)> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, c)| (c, i, j)))
            .collect();
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let target = self.n_left.min(self.n_right);
        let mut left_used = vec![false; self.n_left];
        let mut right_used = vec![false; self.n_right];
        let mut pairs = Vec::with_capacity(target);
        for (_, i, j) in edges {
            if pairs.len() == target {
                break;
            }
            if !left_used[i] && !right_used[j] {
                left_used[i] = true;
                right_used[j] = true;
                pairs.push((i, j));
            }
        }
        self.pad_with_missing(&mut pairs, target, &mut left_used, &mut right_used);
        self.result(pairs, Algorithm::Greedy)
    }

    fn result(&self, mut pairs: Vec<(usize, usize)>, algorithm: Algorithm) -> MatchResult {
        pairs.sort_unstable();
        let pairs: Vec<MatchedPair> = pairs
            .into_iter()
            .map(|(left, right)| MatchedPair { left, right, weight: self.cost(left, right) })
            .collect();
        let total_weight = pairs.iter().map(|p| p.weight).sum();
        MatchResult { pairs, total_weight, algorithm }
    }

    /// Completes a matching to `target` pairs using unmatched pairs in
    /// ascending (left, right) order.
    fn pad_with_missing(
        &self,
        pairs: &mut Vec<(usize, usize)>,
        target: usize,
        left_used: &mut [bool],
        right_used: &mut [bool],
    ) {
        let free: Vec<usize> = (0..self.n_right).filter(|&j| !right_used[j]).collect();
        let mut free_right = free.into_iter();
        for (i, used) in left_used.iter_mut().enumerate() {
            if pairs.len() >= target {
                break;
            }
            if *used {
                continue;
            }
            let Some(j) = free_right.next() else { break };
            *used = true;
            right_used[j] = true;
            pairs.push((i, j));
        }
    }

    /// Rectangular Hungarian algorithm (rows <= columns), O(n² m).
    fn hungarian(&self) -> Vec<(usize, usize)> {
        let (n, m) = (self.n_left, self.n_right);
        // 1-based potentials and column matching; column 0 is the virtual root.
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; m + 1];
        let mut owner = vec![0usize; m + 1];
        let mut way = vec![0usize; m + 1];
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        let mut dense = vec![self.missing; n * m];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                dense[i * m + j] = c;
            }
        }
        for i in 1..=n {
            owner[0] = i;
            let mut j0 = 0;
            minv.fill(f64::INFINITY);
            used.fill(false);
            loop {
                used[j0] = true;
                let i0 = owner[j0];
                let row = &dense[(i0 - 1) * m..i0 * m];
                let mut delta = f64::INFINITY;
                let mut j1 = 0;
                for j in 1..=m {
                    if used[j] {
                        continue;
                    }
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=m {
                    if used[j] {
                        u[owner[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if owner[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                owner[j0] = owner[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        (1..=m)
            .filter(|&j| owner[j] != 0)
            .map(|j| (owner[j] - 1, j - 1))
            .collect()
    }

    /// Up to `r` successive shortest augmenting paths on the stored edges with
    /// costs shifted by `-missing`, stopping early once augmenting stops
    /// paying off; the remainder is padded with absent pairs.
    fn successive_shortest_paths(&self, r: usize) -> Vec<(usize, usize)> {
        let (n, m) = (self.n_left, self.n_right);
        let shift = self.missing;
        let mut match_l: Vec<Option<usize>> = vec![None; n];
        let mut match_r: Vec<Option<usize>> = vec![None; m];
        let mut pot_l = vec![0.0; n];
        // Initial right potentials: cheapest shifted edge into each node.
        let mut pot_r = vec![0.0f64; m];
        for row in &self.rows {
            for &(j, c) in row {
                pot_r[j] = pot_r[j].min(c - shift);
            }
        }
        let mut pot_t = pot_r.iter().copied().fold(0.0, f64::min);

        let sink = n + m;
        let mut dist = vec![f64::INFINITY; n + m + 1];
        let mut parent = vec![usize::MAX; n + m + 1];
        let mut done = vec![false; n + m + 1];
        let mut heap = BinaryHeap::new();
        let mut size = 0;

        while size < r {
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            done.fill(false);
            heap.clear();
            for i in 0..n {
                if match_l[i].is_none() {
                    dist[i] = 0.0;
                    heap.push(HeapItem { dist: 0.0, node: i });
                }
            }
            while let Some(HeapItem { dist: d, node }) = heap.pop() {
                if done[node] {
                    continue;
                }
                done[node] = true;
                if node == sink {
                    break;
                }
                let mut relax = |to: usize, reduced: f64, heap: &mut BinaryHeap<HeapItem>| {
                    let nd = d + reduced.max(0.0);
                    if nd < dist[to] {
                        dist[to] = nd;
                        parent[to] = node;
                        heap.push(HeapItem { dist: nd, node: to });
                    }
                };
                if node < n {
                    let i = node;
                    for &(j, c) in &self.rows[i] {
                        if match_l[i] == Some(j) || done[n + j] {
                            continue;
                        }
                        relax(n + j, c - shift + pot_l[i] - pot_r[j], &mut heap);
                    }
                } else {
                    let j = node - n;
                    match match_r[j] {
                        Some(i) => {
                            if !done[i] {
                                let c = self.cost(i, j) - shift;
                                relax(i, -c + pot_r[j] - pot_l[i], &mut heap);
                            }
                        }
                        None => relax(sink, pot_r[j] - pot_t, &mut heap),
                    }
                }
            }
            if !done[sink] {
                break;
            }
            let d_sink = dist[sink];
            if d_sink + pot_t >= -IMPROVEMENT_EPS {
                break;
            }
            for v in 0..n {
                pot_l[v] += dist[v].min(d_sink);
            }
            for j in 0..m {
                pot_r[j] += dist[n + j].min(d_sink);
            }
            pot_t += d_sink;

            let mut j = parent[sink] - n;
            loop {
                let i = parent[n + j];
                let prev = match_l[i];
                match_l[i] = Some(j);
                match_r[j] = Some(i);
                match prev {
                    Some(pj) => j = pj,
                    None => break,
                }
            }
            size += 1;
        }

        let mut pairs: Vec<(usize, usize)> =
            match_l.iter().enumerate().filter_map(|(i, m)| m.map(|j| (i, j))).collect();
        let mut left_used: Vec<bool> = match_l.iter().map(Option::is_some).collect();
        let mut right_used: Vec<bool> = match_r.iter().map(Option::is_some).collect();
        self.pad_with_missing(&mut pairs, r, &mut left_used, &mut right_used);
        pairs
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Min-heap on distance, then on node index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct BruteForce<'a> {
    graph: &'a WeightGraph,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best: Option<(f64, Vec<(usize, usize)>)>,
}

impl BruteForce<'_> {
    fn descend(&mut self, i: usize, r: usize, cost: f64) {
        let need = r - self.current.len();
        if need == 0 {
            if self.best.as_ref().is_none_or(|(b, _)| cost < *b) {
                self.best = Some((cost, self.current.clone()));
            }
            return;
        }
        if self.graph.n_left - i < need {
            return;
        }
        for j in 0..self.graph.n_right {
            if self.used[j] {
                continue;
            }
            self.used[j] = true;
            self.current.push((i, j));
            self.descend(i + 1, r, cost + self.graph.cost(i, j));
            self.current.pop();
            self.used[j] = false;
        }
        // Leave left node i unmatched.
        self.descend(i + 1, r, cost);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    A1,
    A2(usize),
    BruteForce,
    Greedy,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::A1 => f.write_str("a1"),
            Algorithm::A2(r) => write!(f, "a2:{r}"),
            Algorithm::BruteForce => f.write_str("brute"),
            Algorithm::Greedy => f.write_str("greedy"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "a1" => Ok(Algorithm::A1),
            "brute" => Ok(Algorithm::BruteForce),
            "greedy" => Ok(Algorithm::Greedy),
            _ => s
                .strip_prefix("a2:")
                .and_then(|r| r.parse().ok())
                .map(Algorithm::A2)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "unknown algorithm {s:?}; expected a1 | a2:<r> | greedy | brute"
                    ))
                }),
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub left: usize,
    pub right: usize,
    pub weight: Weight,
}

/// A matching: distinct left indices paired with distinct right indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub total_weight: f64,
    pub algorithm: Algorithm,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Left index → right index.
    pub fn as_map(&self) -> HashMap<usize, usize> {
        self.pairs.iter().map(|p| (p.left, p.right)).collect()
    }

    /// Checks that no left or right index repeats.
    pub fn is_matching(&self) -> bool {
        let mut l: Vec<_> = self.pairs.iter().map(|p| p.left).collect();
        let mut r: Vec<_> = self.pairs.iter().map(|p| p.right).collect();
        l.sort_unstable();
        r.sort_unstable();
        l.windows(2).all(|w| w[0] != w[1]) && r.windows(2).all(|w| w[0] != w[1])
    }

    /// Owner-level pairs `(left owner, right owner, weight)`.
    pub fn owner_pairs<'a>(&self, instance: &'a BipartiteInstance) -> Vec<(&'a str, &'a str, Weight)> {
        self.pairs
            .iter()
            .map(|p| (instance.left.owner(p.left), instance.right.owner(p.right), p.weight))
            .collect()
    }

    /// Writes the headered `left_owner,right_owner,weight` CSV.
    pub fn write_csv<W: Write>(&self, instance: &BipartiteInstance, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["left_owner", "right_owner", "weight"])?;
        for (l, r, w) in self.owner_pairs(instance) {
            wtr.write_record([l, r, &format!("{w}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary(&self, runtime_ms: f64) -> MatchSummary {
        MatchSummary {
            algorithm: self.algorithm.to_string(),
            cardinality: self.pairs.len(),
            total_weight: self.total_weight,
            runtime_ms,
        }
    }
}

/// JSON summary written next to a match result.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct MatchSummary {
    pub algorithm: String,
    pub cardinality: usize,
    pub total_weight: f64,
    pub runtime_ms: f64,
}

/// The weighted bipartite graph between an unlabeled and a labeled set.
#[derive(Debug, Clone)]
pub struct BipartiteInstance {
    pub left: HistogramSet,
    pub right: HistogramSet,
    pub metric: MetricKind,
    pub graph: WeightGraph,
}

impl BipartiteInstance {
    pub fn pruned(&self) -> bool {
        !self.graph.is_complete()
    }
}

/// Computes edge weights between every left and right histogram, in
/// parallel over left nodes. Similarities are stored as `1 - dot`.
///
/// With `prune`, pairs with disjoint supports are left out; every metric
/// takes its maximal distance on such pairs, which is the weight absent
/// edges carry.
pub fn build_instance(
    left: &HistogramSet,
    right: &HistogramSet,
    metric: MetricKind,
    prune: bool,
) -> Result<BipartiteInstance> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::InvalidInput("both histogram sets must be non-empty".into()));
    }
    let alphabet = Alphabet::observed([left, right]);
    let ranks: HashMap<&LocationId, u32> = alphabet.iter().zip(0u32..).collect();
    let rank = |l: &LocationId| ranks[l];
    let lefts: Vec<Ranked> = left.histograms().map(|h| Ranked::new(h, rank)).collect();
    let rights: Vec<Ranked> = right.histograms().map(|h| Ranked::new(h, rank)).collect();
    let rows: Vec<Vec<(usize, f64)>> = if prune {
        let mut postings: Vec<Vec<usize>> = vec![Vec::new(); alphabet.size()];
        for (j, h) in rights.iter().enumerate() {
            for k in h.keys() {
                postings[k as usize].push(j);
            }
        }
        lefts
            .par_iter()
            .map(|p| {
                let mut candidates: Vec<usize> =
                    p.keys().flat_map(|k| postings[k as usize].iter().copied()).collect();
                candidates.sort_unstable();
                candidates.dedup();
                candidates
                    .into_iter()
                    .map(|j| (j, metric.kernel_distance(p, &rights[j])))
                    .collect()
            })
            .collect()
    } else {
        lefts
            .par_iter()
            .map(|p| rights.iter().enumerate().map(|(j, q)| (j, metric.kernel_distance(p, q))).collect())
            .collect()
    };
    let graph = WeightGraph::from_sparse(right.len(), rows, metric.max_distance())?;
    Ok(BipartiteInstance { left: left.clone(), right: right.clone(), metric, graph })
}

/// A1 on an instance: the smaller side must be on the left.
pub fn match_min_weight(instance: &BipartiteInstance) -> Result<MatchResult> {
    instance.graph.min_weight_maximal()
}

/// A2 on an instance.
pub fn match_cardinality(instance: &BipartiteInstance, r: usize) -> Result<MatchResult> {
    instance.graph.min_weight_cardinality(r)
}

pub fn match_bruteforce(instance: &BipartiteInstance, r: Option<usize>) -> Result<MatchResult> {
    instance.graph.brute_force(r)
}

pub fn match_greedy(instance: &BipartiteInstance) -> MatchResult {
    instance.graph.greedy()
}

/// Generalized log-likelihood of the hypothesis encoded by a maximal
/// matching, with every histogram summarizing `t` samples:
/// `-2t · Σ [H(left) + H(right) + w(left, right)]` over matched pairs.
///
/// The entropy terms do not depend on the matching, so the matching that
/// maximizes this value is the one with minimum total weight.
pub fn generalized_log_likelihood(
    instance: &BipartiteInstance,
    assignment: &MatchResult,
    t: u64,
) -> Result<f64> {
    if instance.metric != MetricKind::Proposed {
        return Err(Error::MetricMismatch {
            expected: MetricKind::Proposed.to_string(),
            found: instance.metric.to_string(),
        });
    }
    if t == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let maximal = instance.left.len().min(instance.right.len());
    if assignment.pairs.len() != maximal || !assignment.is_matching() {
        return Err(Error::NotMaximal(format!(
            "{} pairs, expected {maximal} distinct pairs",
            assignment.pairs.len()
        )));
    }
    let mut sum = 0.0;
    for p in &assignment.pairs {
        if p.left >= instance.left.len() || p.right >= instance.right.len() {
            return Err(Error::NotMaximal(format!("pair ({}, {}) out of range", p.left, p.right)));
        }
        sum += shannon_entropy(instance.left.histogram(p.left))
            + shannon_entropy(instance.right.histogram(p.right))
            + instance.graph.cost(p.left, p.right);
    }
    Ok(-2.0 * t as f64 * sum)
}
