//! CSV formats for histogram sets and ground truth.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::histogram::{GroundTruth, Histogram, HistogramSet, LocationId};

/// Per-owner probabilities must sum to one within this tolerance on load.
pub const LOAD_TOLERANCE: f64 = 1e-6;

/// Reads a headered `owner,location,probability` CSV. Owners keep the order
/// of their first row.
pub fn read_histogram_set<R: Read>(reader: R, labeled: bool) -> Result<HistogramSet> {
    #[derive(Deserialize)]
    struct Row {
        owner: String,
        location: LocationId,
        probability: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(LocationId, f64)>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let Row { owner, location, probability } = row?;
        let slot = rows.entry(owner.clone()).or_insert_with(|| {
            order.push(owner.clone());
            Vec::new()
        });
        slot.push((location, probability));
    }
    let entries = order
        .into_iter()
        .map(|owner| {
            let probs = rows.remove(&owner).unwrap_or_default();
            let h = Histogram::from_probabilities(probs, LOAD_TOLERANCE)
                .map_err(|e| Error::InvalidHistogram(format!("owner {owner:?}: {e}")))?;
            Ok((owner, h))
        })
        .collect::<Result<Vec<_>>>()?;
    HistogramSet::new(entries, labeled)
}

/// Writes a histogram set as `owner,location,probability`, rows grouped by
/// owner. Probabilities use the shortest representation that round-trips.
pub fn write_histogram_set<W: Write>(set: &HistogramSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["owner", "location", "probability"])?;
    for (owner, h) in set.iter() {
        for (l, p) in h.iter() {
            wtr.write_record([owner, l.as_str(), &format!("{p}")])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a headered `left_owner,right_owner` CSV.
pub fn read_truth<R: Read>(reader: R) -> Result<GroundTruth> {
    #[derive(Deserialize)]
    struct Row {
        left_owner: String,
        right_owner: String,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut pairs = Vec::new();
    for row in rdr.deserialize() {
        let Row { left_owner, right_owner } = row?;
        pairs.push((left_owner, right_owner));
    }
    GroundTruth::new(pairs)
}

pub fn write_truth<W: Write>(truth: &GroundTruth, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["left_owner", "right_owner"])?;
    for (l, r) in truth.iter() {
        wtr.write_record([l, r])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_grouped_rows() {
        let csv = "owner,location,probability\nb,X,0.25\nb,Y,0.75\na,X,1\n";
        let set = read_histogram_set(csv.as_bytes(), true).unwrap();
        assert_eq!(set.owners().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(set.get("b").unwrap().mass(&"Y".into()), 0.75);
        assert!(set.labeled());
    }

    #[test]
    fn rejects_unnormalized_owner() {
        let csv = "owner,location,probability\na,X,0.5\na,Y,0.4\n";
        let err = read_histogram_set(csv.as_bytes(), false).unwrap_err();
        assert!(matches!(err, Error::InvalidHistogram(_)));
    }

    #[test]
    fn accepts_small_rounding() {
        let csv = "owner,location,probability\na,X,0.3333333\na,Y,0.6666667\n";
        let set = read_histogram_set(csv.as_bytes(), false).unwrap();
        let total: f64 = set.histogram(0).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truth_roundtrip() {
        let t = GroundTruth::new(vec![("x0".into(), "u3".into()), ("x1".into(), "u0".into())]).unwrap();
        let mut out = Vec::new();
        write_truth(&t, &mut out).unwrap();
        assert_eq!(read_truth(out.as_slice()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn histogram_csv_roundtrip_is_exact(weights in proptest::collection::vec(
            proptest::collection::vec(0.0f64..10.0, 1..6), 1..5)) {
            let entries: Vec<(String, Histogram)> = weights
                .iter()
                .enumerate()
                .filter_map(|(i, w)| {
                    Histogram::from_weights(
                        w.iter().enumerate().map(|(j, &x)| (LocationId::new(format!("L{j}")).unwrap(), x)),
                    )
                    .ok()
                    .map(|h| (format!("o{i}"), h))
                })
                .collect();
            prop_assume!(!entries.is_empty());
            let set = HistogramSet::new(entries, false).unwrap();
            let mut out = Vec::new();
            write_histogram_set(&set, &mut out).unwrap();
            let back = read_histogram_set(out.as_slice(), false).unwrap();
            prop_assert_eq!(back.len(), set.len());
            for i in 0..set.len() {
                let (a, b) = (set.histogram(i), back.histogram(i));
                prop_assert_eq!(a.support_count(), b.support_count());
                for ((la, pa), (lb, pb)) in a.iter().zip(b.iter()) {
                    prop_assert_eq!(la, lb);
                    prop_assert!((pa - pb).abs() < 1e-15);
                }
            }
        }
    }
}
