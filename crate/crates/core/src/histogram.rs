//! Location alphabet, sparse empirical distributions and the sets of them
//! that form the two sides of a matching problem.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of every stored histogram.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Opaque location token: an antenna id, a website id or a grid-cell key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocationId(Arc<str>);

impl LocationId {
    pub fn new(id: impl AsRef<str>) -> Result<Self> {
        let id = id.as_ref();
        if id.is_empty() {
            return Err(Error::InvalidLocation(id.to_string()));
        }
        Ok(LocationId(Arc::from(id)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for LocationId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LocationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LocationId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Convenience for tests and literals; panics on an empty id.
impl From<&str> for LocationId {
    fn from(s: &str) -> Self {
        LocationId::new(s).expect("location id must be non-empty")
    }
}

/// Ordered, duplicate-free set of locations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alphabet {
    symbols: BTreeSet<LocationId>,
}

impl Alphabet {
    pub fn new(symbols: impl IntoIterator<Item = LocationId>) -> Self {
        Alphabet { symbols: symbols.into_iter().collect() }
    }

    /// Union of every location observed in the given sets.
    pub fn observed<'a>(sets: impl IntoIterator<Item = &'a HistogramSet>) -> Self {
        let mut symbols = BTreeSet::new();
        for set in sets {
            for (_, h) in set.iter() {
                symbols.extend(h.iter().map(|(l, _)| l.clone()));
            }
        }
        Alphabet { symbols }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn contains(&self, l: &LocationId) -> bool {
        self.symbols.contains(l)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocationId> {
        self.symbols.iter()
    }
}

/// Sparse probability distribution over locations.
///
/// Entries are kept sorted by location id and every stored mass is strictly
/// positive. Absent locations carry zero mass.
#[derive(Debug, Clone)]
pub struct Histogram {
    entries: Vec<(LocationId, f64)>,
    sample_count: u64,
    // Sum and squared norm of the stored masses, accumulated in entry order.
    total: f64,
    norm_sq: f64,
}

impl PartialEq for Histogram {
    /// Exact equality of the sparse maps; `sample_count` is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Histogram {
    fn from_sorted(entries: Vec<(LocationId, f64)>, sample_count: u64) -> Self {
        let total = entries.iter().map(|(_, p)| p).sum();
        let norm_sq = entries.iter().map(|(_, p)| p * p).sum();
        Histogram { entries, sample_count, total, norm_sq }
    }

    /// Normalizes non-negative weights into a distribution. Zero weights are
    /// dropped; duplicate locations are summed.
    pub fn from_weights(weights: impl IntoIterator<Item = (LocationId, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<LocationId, f64> = BTreeMap::new();
        for (l, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidHistogram(format!("weight {w} at {l}")));
            }
            if w > 0.0 {
                *acc.entry(l).or_insert(0.0) += w;
            }
        }
        let sum: f64 = acc.values().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidHistogram("no positive mass".into()));
        }
        let entries = acc.into_iter().map(|(l, w)| (l, w / sum)).collect();
        Ok(Self::from_sorted(entries, 0))
    }

    /// Builds a histogram from explicit probabilities that must already sum to
    /// one within `tolerance`; the result is renormalized.
    pub fn from_probabilities(
        probs: impl IntoIterator<Item = (LocationId, f64)>,
        tolerance: f64,
    ) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (l, p) in probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidHistogram(format!("probability {p} at {l}")));
            }
            if seen.insert(l.clone(), p).is_some() {
                return Err(Error::InvalidHistogram(format!("duplicate location {l}")));
            }
        }
        let sum: f64 = seen.values().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::InvalidHistogram(format!(
                "probabilities sum to {sum}, expected 1 within {tolerance}"
            )));
        }
        Self::from_weights(seen)
    }

    /// Point mass on a single location.
    pub fn point(l: LocationId) -> Self {
        Self::from_sorted(vec![(l, 1.0)], 0)
    }

    pub fn with_sample_count(mut self, t: u64) -> Self {
        self.sample_count = t;
        self
    }

    pub fn mass(&self, l: &LocationId) -> f64 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(l))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn support_count(&self) -> usize {
        self.entries.len()
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Entries in ascending location order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&LocationId, f64)> {
        self.entries.iter().map(|(l, p)| (l, *p))
    }

    pub fn entries(&self) -> &[(LocationId, f64)] {
        &self.entries
    }

    pub(crate) fn total(&self) -> f64 {
        self.total
    }

    pub(crate) fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn shares_support(&self, other: &Histogram) -> bool {
        let (small, large) = if self.entries.len() <= other.entries.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.entries.iter().any(|(l, _)| large.mass(l) > 0.0)
    }

    /// Exact arithmetic mean of several histograms over the union of supports.
    pub fn mean<'a>(members: impl IntoIterator<Item = &'a Histogram>) -> Result<Histogram> {
        let mut acc: BTreeMap<LocationId, f64> = BTreeMap::new();
        let mut n = 0usize;
        for h in members {
            n += 1;
            for (l, p) in h.iter() {
                *acc.entry(l.clone()).or_insert(0.0) += p;
            }
        }
        if n == 0 {
            return Err(Error::InvalidHistogram("mean of zero histograms".into()));
        }
        let nf = n as f64;
        let entries = acc.into_iter().map(|(l, s)| (l, s / nf)).collect();
        Ok(Self::from_sorted(entries, 0))
    }
}

/// Empirical distribution of a string of locations.
pub fn build_histogram(events: &[LocationId]) -> Result<Histogram> {
    if events.is_empty() {
        return Err(Error::EmptyString);
    }
    let mut counts: BTreeMap<&LocationId, u64> = BTreeMap::new();
    for l in events {
        *counts.entry(l).or_insert(0) += 1;
    }
    let t = events.len() as f64;
    let entries = counts
        .into_iter()
        .map(|(l, c)| (l.clone(), c as f64 / t))
        .collect();
    Ok(Histogram::from_sorted(entries, events.len() as u64))
}

/// One side of a matching problem: owners with their histograms.
#[derive(Debug, Clone)]
pub struct HistogramSet {
    entries: Vec<(String, Histogram)>,
    labeled: bool,
    index: HashMap<String, usize>,
}

impl HistogramSet {
    pub fn new(entries: Vec<(String, Histogram)>, labeled: bool) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (owner, _)) in entries.iter().enumerate() {
            if index.insert(owner.clone(), i).is_some() {
                return Err(Error::DuplicateOwner(owner.clone()));
            }
        }
        Ok(HistogramSet { entries, labeled, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    pub fn owner(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn histogram(&self, i: usize) -> &Histogram {
        &self.entries[i].1
    }

    pub fn position(&self, owner: &str) -> Option<usize> {
        self.index.get(owner).copied()
    }

    pub fn get(&self, owner: &str) -> Option<&Histogram> {
        self.position(owner).map(|i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &Histogram)> {
        self.entries.iter().map(|(o, h)| (o.as_str(), h))
    }

    pub fn histograms(&self) -> impl ExactSizeIterator<Item = &Histogram> {
        self.entries.iter().map(|(_, h)| h)
    }

    pub fn owners(&self) -> impl ExactSizeIterator<Item = &str> {
        self.entries.iter().map(|(o, _)| o.as_str())
    }

    /// Applies `f` to every histogram, dropping owners for which it returns `None`.
    pub fn filter_map(&self, mut f: impl FnMut(&str, &Histogram) -> Option<Histogram>) -> Self {
        let entries: Vec<_> = self
            .entries
            .iter()
            .filter_map(|(o, h)| f(o, h).map(|h| (o.clone(), h)))
            .collect();
        let index = entries.iter().enumerate().map(|(i, (o, _))| (o.clone(), i)).collect();
        HistogramSet { entries, labeled: self.labeled, index }
    }

    /// Restricts the set to the given owners, keeping the set's own order.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> Self {
        self.filter_map(|o, h| keep.contains(o).then(|| h.clone()))
    }

    pub fn into_entries(self) -> Vec<(String, Histogram)> {
        self.entries
    }
}

/// Injective map from unlabeled owner ids to labeled owner ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    mapping: BTreeMap<String, String>,
}

impl GroundTruth {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        let mut targets = BTreeSet::new();
        for (l, r) in pairs {
            if !targets.insert(r.clone()) {
                return Err(Error::InvalidInput(format!("ground truth maps twice onto {r:?}")));
            }
            if mapping.insert(l.clone(), r).is_some() {
                return Err(Error::InvalidInput(format!("ground truth lists {l:?} twice")));
            }
        }
        Ok(GroundTruth { mapping })
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn get(&self, left_owner: &str) -> Option<&str> {
        self.mapping.get(left_owner).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.mapping.iter().map(|(l, r)| (l.as_str(), r.as_str()))
    }

    /// Labeled owner → unlabeled owner.
    pub fn inverse(&self) -> BTreeMap<&str, &str> {
        self.mapping.iter().map(|(l, r)| (r.as_str(), l.as_str())).collect()
    }
}
