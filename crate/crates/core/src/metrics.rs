//! Pairwise histogram weights: the Jensen-Shannon style weight that is
//! optimal for i.i.d. users, and the l1 / cosine / dot heuristics.
//!
//! Every function walks the smaller support and probes the larger one. The
//! operand that gets walked is chosen canonically, which makes every metric
//! exactly symmetric.

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{Histogram, LocationId};

/// Edge weight between two histograms, in nats for the divergence-based kinds.
pub type Weight = f64;

/// Upper bound of [`weight_proposed`], reached on disjoint supports.
pub const PROPOSED_MAX: f64 = 2.0 * LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Proposed,
    L1,
    Cosine,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Distance,
    Similarity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] =
        [MetricKind::Proposed, MetricKind::L1, MetricKind::Cosine, MetricKind::Dot];

    pub fn orientation(self) -> Orientation {
        match self {
            MetricKind::Dot => Orientation::Similarity,
            _ => Orientation::Distance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Proposed => "proposed",
            MetricKind::L1 => "l1",
            MetricKind::Cosine => "cosine",
            MetricKind::Dot => "dot",
        }
    }

    /// Raw metric value (a similarity for `Dot`).
    pub fn weight(self, p: &Histogram, q: &Histogram) -> Weight {
        self.kernel(p, q)
    }

    /// Value to minimize: the weight itself, or `1 - dot` for the similarity.
    pub fn distance(self, p: &Histogram, q: &Histogram) -> f64 {
        self.kernel_distance(p, q)
    }

    fn kernel<S: Support>(self, p: &S, q: &S) -> Weight {
        match self {
            MetricKind::Proposed => proposed(p, q),
            MetricKind::L1 => l1(p, q),
            MetricKind::Cosine => cosine(p, q),
            MetricKind::Dot => dot(p, q),
        }
    }

    pub(crate) fn kernel_distance<S: Support>(self, p: &S, q: &S) -> f64 {
        match self.orientation() {
            Orientation::Distance => self.kernel(p, q),
            Orientation::Similarity => 1.0 - self.kernel(p, q),
        }
    }

    /// Distance between two histograms with disjoint supports, which is also
    /// the largest distance the metric can produce.
    pub fn max_distance(self) -> f64 {
        match self {
            MetricKind::Proposed => PROPOSED_MAX,
            MetricKind::L1 => 2.0,
            MetricKind::Cosine | MetricKind::Dot => 1.0,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proposed" => Ok(MetricKind::Proposed),
            "l1" => Ok(MetricKind::L1),
            "cosine" => Ok(MetricKind::Cosine),
            "dot" => Ok(MetricKind::Dot),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

/// Sorted sparse entries with cached sums: the view every kernel reads.
pub(crate) trait Support {
    type Key: Ord;
    fn entries(&self) -> &[(Self::Key, f64)];
    fn total(&self) -> f64;
    fn norm_sq(&self) -> f64;
}

impl Support for Histogram {
    type Key = LocationId;

    fn entries(&self) -> &[(LocationId, f64)] {
        Histogram::entries(self)
    }

    fn total(&self) -> f64 {
        Histogram::total(self)
    }

    fn norm_sq(&self) -> f64 {
        Histogram::norm_sq(self)
    }
}

/// A histogram whose location ids are replaced by their rank in a sorted
/// alphabet. Ranks keep the id order, so kernels give bit-identical results
/// on a ranked pair and on the original pair.
#[derive(Debug, Clone)]
pub(crate) struct Ranked {
    entries: Vec<(u32, f64)>,
    total: f64,
    norm_sq: f64,
}

impl Ranked {
    pub(crate) fn new(h: &Histogram, rank: impl Fn(&LocationId) -> u32) -> Self {
        Ranked {
            entries: h.iter().map(|(l, p)| (rank(l), p)).collect(),
            total: Histogram::total(h),
            norm_sq: Histogram::norm_sq(h),
        }
    }

    pub(crate) fn keys(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(k, _)| k)
    }
}

impl Support for Ranked {
    type Key = u32;

    fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    fn total(&self) -> f64 {
        self.total
    }

    fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

/// Orders a pair so that the smaller support comes first. Equal-size pairs
/// are ordered by their entries so that `(p, q)` and `(q, p)` agree.
fn canonical<'a, S: Support>(p: &'a S, q: &'a S) -> (&'a S, &'a S) {
    let (ep, eq) = (p.entries(), q.entries());
    let ord = ep.len().cmp(&eq.len()).then_with(|| {
        ep.iter()
            .zip(eq)
            .map(|((lp, mp), (lq, mq))| lp.cmp(lq).then_with(|| mp.total_cmp(mq)))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    if ord == Ordering::Greater {
        (q, p)
    } else {
        (p, q)
    }
}

/// Walks the common support of a canonical pair. Returns the mass of the
/// small operand outside the common support and the mass of the large
/// operand inside it.
fn walk<S: Support>(small: &S, large: &S, mut common: impl FnMut(f64, f64)) -> (f64, f64) {
    let mut small_only = 0.0;
    let mut large_common = 0.0;
    let mut rest = large.entries();
    for (l, a) in small.entries() {
        // Both supports are sorted: skip past smaller ids of `large`.
        let skip = rest.partition_point(|(k, _)| k < l);
        rest = &rest[skip..];
        match rest.first() {
            Some((k, b)) if k == l => {
                common(*a, *b);
                large_common += b;
                rest = &rest[1..];
            }
            _ => small_only += a,
        }
    }
    (small_only, large_common)
}

fn proposed<S: Support>(p: &S, q: &S) -> Weight {
    let (small, large) = canonical(p, q);
    let mut common = 0.0;
    let (small_only, large_common) = walk(small, large, |a, b| {
        let s = a + b;
        common += a * (2.0 * a / s).ln() + b * (2.0 * b / s).ln();
    });
    let large_only = (large.total() - large_common).max(0.0);
    (common + LN_2 * (small_only + large_only)).clamp(0.0, PROPOSED_MAX)
}

fn l1<S: Support>(p: &S, q: &S) -> Weight {
    let (small, large) = canonical(p, q);
    let mut common = 0.0;
    let (small_only, large_common) = walk(small, large, |a, b| common += (a - b).abs());
    let large_only = (large.total() - large_common).max(0.0);
    (common + small_only + large_only).clamp(0.0, 2.0)
}

fn dot<S: Support>(p: &S, q: &S) -> Weight {
    let (small, large) = canonical(p, q);
    let mut dot = 0.0;
    walk(small, large, |a, b| dot += a * b);
    dot.clamp(0.0, 1.0)
}

fn cosine<S: Support>(p: &S, q: &S) -> Weight {
    let norms = (p.norm_sq() * q.norm_sq()).sqrt();
    (1.0 - dot(p, q) / norms).clamp(0.0, 1.0)
}

/// Kullback-Leibler divergence D(p‖q) in nats.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    let mut d = 0.0;
    for (l, a) in p.iter() {
        let b = q.mass(l);
        if b <= 0.0 {
            return Err(Error::AbsoluteContinuity(l.to_string()));
        }
        d += a * (a / b).ln();
    }
    Ok(d.max(0.0))
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &Histogram) -> f64 {
    let h: f64 = p.iter().map(|(_, a)| -a * a.ln()).sum();
    h.max(0.0)
}

/// D(p‖m) + D(q‖m) with m the midpoint of p and q.
///
/// Locations in only one support contribute `mass · ln 2`, so they are
/// accounted for in bulk instead of being visited.
pub fn weight_proposed(p: &Histogram, q: &Histogram) -> Weight {
    proposed(p, q)
}

/// l1 distance, in [0, 2].
pub fn weight_l1(p: &Histogram, q: &Histogram) -> Weight {
    l1(p, q)
}

/// Inner product of the two distributions; a similarity in [0, 1].
pub fn weight_dot(p: &Histogram, q: &Histogram) -> Weight {
    dot(p, q)
}

/// One minus the cosine similarity.
pub fn weight_cosine(p: &Histogram, q: &Histogram) -> Weight {
    cosine(p, q)
}
