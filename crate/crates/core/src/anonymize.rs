//! k-anonymization of a histogram set by micro-aggregation, and the
//! normalized information loss of a clustering.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::histogram::{Histogram, HistogramSet};
use crate::metrics::weight_l1;

/// Disjoint clusters covering a histogram set, with their centroids.
#[derive(Debug, Clone)]
pub struct ClusterPartition {
    /// Member owner ids of each cluster, in input order.
    pub clusters: Vec<Vec<String>>,
    pub centroids: Vec<Histogram>,
    /// Smallest cluster size.
    pub k_achieved: usize,
}

impl ClusterPartition {
    /// Number of clusters.
    pub fn g(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster index of every owner.
    pub fn cluster_of(&self, owner: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.iter().any(|o| o == owner))
    }

    /// Owner → cluster index for all owners.
    pub fn assignment(&self) -> std::collections::HashMap<&str, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(q, c)| c.iter().map(move |o| (o.as_str(), q)))
            .collect()
    }

    /// Partition where every owner sits alone.
    pub fn singletons(set: &HistogramSet) -> Self {
        ClusterPartition {
            clusters: set.owners().map(|o| vec![o.to_string()]).collect(),
            centroids: set.histograms().cloned().collect(),
            k_achieved: if set.is_empty() { 0 } else { 1 },
        }
    }

    /// Builds the partition and centroids from cluster memberships given as
    /// positions into `set`.
    pub fn from_positions(set: &HistogramSet, mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; set.len()];
        for g in &mut groups {
            g.sort_unstable();
            for &i in g.iter() {
                if i >= set.len() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput(format!("position {i} repeated or out of range")));
                }
            }
        }
        if seen.iter().any(|s| !s) || groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("clusters must be non-empty and cover the set".into()));
        }
        let centroids = groups
            .iter()
            .map(|g| Histogram::mean(g.iter().map(|&i| set.histogram(i))))
            .collect::<Result<Vec<_>>>()?;
        let clusters = groups
            .iter()
            .map(|g| g.iter().map(|&i| set.owner(i).to_string()).collect())
            .collect();
        let k_achieved = groups.iter().map(Vec::len).min().unwrap_or(0);
        Ok(ClusterPartition { clusters, centroids, k_achieved })
    }

    /// Histogram set where every owner carries its cluster centroid, in the
    /// order of `set`.
    pub fn release(&self, set: &HistogramSet) -> Result<HistogramSet> {
        let assignment = self.assignment();
        let entries = set
            .owners()
            .map(|o| {
                let q = assignment
                    .get(o)
                    .ok_or_else(|| Error::InvalidInput(format!("owner {o:?} not in partition")))?;
                Ok((o.to_string(), self.centroids[*q].clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        HistogramSet::new(entries, set.labeled())
    }

    /// JSON document `{k, g, L, clusters}`.
    pub fn write_json<W: Write>(&self, k: usize, loss: f64, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            k: usize,
            g: usize,
            #[serde(rename = "L")]
            loss: f64,
            clusters: &'a [Vec<String>],
        }
        serde_json::to_writer_pretty(writer, &Doc { k, g: self.g(), loss, clusters: &self.clusters })?;
        Ok(())
    }
}

/// Micro-aggregation with clusters of at least `k` members.
///
/// Fixed-size heuristic under l1 distortion: while at least `2k` records
/// remain, take the remaining record farthest from the centroid of the
/// remaining records and group it with its `k - 1` nearest remaining
/// records. The final fewer-than-`2k` records form one cluster. Ties go to
/// the earlier record.
pub fn microaggregate(set: &HistogramSet, k: usize) -> Result<(ClusterPartition, HistogramSet)> {
    let n = set.len();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if k == 1 {
        return Ok((ClusterPartition::singletons(set), set.clone()));
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut groups = Vec::with_capacity(n / k);
    while remaining.len() >= 2 * k {
        let centroid = Histogram::mean(remaining.iter().map(|&i| set.histogram(i)))?;
        let far = argmax_by(&remaining, |i| weight_l1(set.histogram(i), &centroid));
        let anchor = set.histogram(far);
        let mut by_distance: Vec<(f64, usize)> = remaining
            .iter()
            .filter(|&&i| i != far)
            .map(|&i| (weight_l1(set.histogram(i), anchor), i))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut group: Vec<usize> = std::iter::once(far)
            .chain(by_distance.iter().take(k - 1).map(|&(_, i)| i))
            .collect();
        group.sort_unstable();
        remaining.retain(|i| group.binary_search(i).is_err());
        groups.push(group);
    }
    groups.push(remaining);
    let partition = ClusterPartition::from_positions(set, groups)?;
    let released = partition.release(set)?;
    Ok((partition, released))
}

fn argmax_by(items: &[usize], f: impl Fn(usize) -> f64) -> usize {
    let mut best = items[0];
    let mut best_val = f(best);
    for &i in &items[1..] {
        let v = f(i);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Normalized information loss: within-cluster l1 distortion divided by the
/// l1 distortion of collapsing everything onto the grand centroid.
///
/// Returns 0 when every histogram is identical (nothing can be lost).
pub fn information_loss(partition: &ClusterPartition, set: &HistogramSet) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let grand = Histogram::mean(set.histograms())?;
    let denominator: f64 = set.histograms().map(|h| weight_l1(h, &grand)).sum();
    let mut numerator = 0.0;
    let mut covered = 0;
    for (members, centroid) in partition.clusters.iter().zip(&partition.centroids) {
        for o in members {
            let h = set
                .get(o)
                .ok_or_else(|| Error::InvalidInput(format!("owner {o:?} not in histogram set")))?;
            numerator += weight_l1(h, centroid);
            covered += 1;
        }
    }
    if covered != set.len() {
        return Err(Error::InvalidInput("partition does not cover the histogram set".into()));
    }
    if denominator <= 0.0 {
        return Ok(0.0);
    }
    Ok((numerator / denominator).clamp(0.0, 1.0))
}

/// True when every released histogram equals at least `k - 1` others.
pub fn verify_k_anonymity(released: &HistogramSet, k: usize) -> bool {
    if k <= 1 {
        return true;
    }
    let hs: Vec<&Histogram> = released.histograms().collect();
    hs.iter()
        .all(|h| hs.iter().filter(|other| *other == h).count() >= k)
}
