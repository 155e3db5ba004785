//! Histogram coarsening and suppression, and GPS grid quantization.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::histogram::{Histogram, HistogramSet, LocationId};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Location → coarser location. Ids absent from the table map to themselves.
#[derive(Debug, Clone, Default)]
pub struct AggregationTable {
    map: HashMap<LocationId, LocationId>,
}

impl AggregationTable {
    pub fn new(pairs: impl IntoIterator<Item = (LocationId, LocationId)>) -> Self {
        AggregationTable { map: pairs.into_iter().collect() }
    }

    pub fn target<'a>(&'a self, l: &'a LocationId) -> &'a LocationId {
        self.map.get(l).unwrap_or(l)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Reads a headered `from,to` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            from: LocationId,
            to: LocationId,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut map = HashMap::new();
        for row in rdr.deserialize() {
            let Row { from, to } = row?;
            if let Some(prev) = map.insert(from.clone(), to.clone()) {
                if prev != to {
                    return Err(Error::InvalidInput(format!("location {from} aggregated twice")));
                }
            }
        }
        Ok(AggregationTable { map })
    }
}

/// Sums the mass of every location into its aggregation target.
pub fn aggregate_locations(h: &Histogram, table: &AggregationTable) -> Histogram {
    Histogram::from_weights(h.iter().map(|(l, p)| (table.target(l).clone(), p)))
        .expect("aggregating a valid histogram keeps positive mass")
        .with_sample_count(h.sample_count())
}

/// Drops every location outside `keep` and renormalizes the rest.
pub fn suppress_and_renormalize(h: &Histogram, keep: &BTreeSet<LocationId>) -> Result<Histogram> {
    let kept: Vec<_> = h
        .iter()
        .filter(|(l, _)| keep.contains(*l))
        .map(|(l, p)| (l.clone(), p))
        .collect();
    if kept.is_empty() {
        return Err(Error::ZeroMassAfterSuppression);
    }
    if kept.len() == h.support_count() {
        return Ok(h.clone());
    }
    Ok(Histogram::from_weights(kept)?.with_sample_count(h.sample_count()))
}

/// The `top` most visited locations across the given sets. Popularity is the
/// visit count (mass × sample count, or mass alone for synthetic histograms);
/// ties break toward the smaller location id.
pub fn popular_locations<'a>(
    sets: impl IntoIterator<Item = &'a HistogramSet>,
    top: usize,
) -> BTreeSet<LocationId> {
    let mut visits: HashMap<&LocationId, f64> = HashMap::new();
    for set in sets {
        for h in set.histograms() {
            let scale = if h.sample_count() > 0 { h.sample_count() as f64 } else { 1.0 };
            for (l, p) in h.iter() {
                *visits.entry(l).or_insert(0.0) += p * scale;
            }
        }
    }
    let mut ranked: Vec<_> = visits.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(top).map(|(l, _)| l.clone()).collect()
}

/// Grid-cell key `"row:col"` for a GPS point, using a local equirectangular
/// projection centered on `origin`.
pub fn quantize_geo(lat: f64, lon: f64, cell_side: f64, origin: (f64, f64)) -> Result<LocationId> {
    let (lat0, lon0) = origin;
    if !(lat.is_finite() && lon.is_finite()) {
        return Err(Error::InvalidCoordinate { lat, lon });
    }
    if !(lat0.is_finite() && lon0.is_finite()) {
        return Err(Error::InvalidCoordinate { lat: lat0, lon: lon0 });
    }
    if !(cell_side.is_finite() && cell_side > 0.0) {
        return Err(Error::InvalidCellSide(cell_side));
    }
    let (north, east) = local_offset_m(lat, lon, origin);
    let row = (north / cell_side).floor() as i64;
    let col = (east / cell_side).floor() as i64;
    LocationId::new(format!("{row}:{col}"))
}

/// (north, east) offset in meters of a point relative to `origin`.
pub fn local_offset_m(lat: f64, lon: f64, origin: (f64, f64)) -> (f64, f64) {
    let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let north = (lat - origin.0) * m_per_deg;
    let east = (lon - origin.1) * m_per_deg * origin.0.to_radians().cos();
    (north, east)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(&str, f64)]) -> Histogram {
        Histogram::from_probabilities(pairs.iter().map(|&(l, p)| (l.into(), p)), 1e-9).unwrap()
    }

    fn table(pairs: &[(&str, &str)]) -> AggregationTable {
        AggregationTable::new(pairs.iter().map(|&(a, b)| (a.into(), b.into())))
    }

    #[test]
    fn total_aggregation() {
        let h = hist(&[("A", 0.3), ("B", 0.7)]);
        let out = aggregate_locations(&h, &table(&[("A", "X"), ("B", "X")]));
        assert_eq!(out, Histogram::point("X".into()));
    }

    #[test]
    fn identity_aggregation() {
        let h = hist(&[("A", 0.3), ("B", 0.7)]);
        assert_eq!(aggregate_locations(&h, &AggregationTable::default()), h);
    }

    #[test]
    fn partial_sums() {
        let h = hist(&[("A", 0.25), ("B", 0.25), ("C", 0.5)]);
        let out = aggregate_locations(&h, &table(&[("A", "X"), ("B", "X"), ("C", "Y")]));
        assert_eq!(out, hist(&[("X", 0.5), ("Y", 0.5)]));
    }

    #[test]
    fn aggregation_table_csv() {
        let t = AggregationTable::read_csv("from,to\nA,X\nB,X\n".as_bytes()).unwrap();
        assert_eq!(t.target(&"A".into()).as_str(), "X");
        assert_eq!(t.target(&"Q".into()).as_str(), "Q");
        assert!(AggregationTable::read_csv("from,to\nA,X\nA,Y\n".as_bytes()).is_err());
    }

    #[test]
    fn suppression_renormalizes() {
        let h = hist(&[("A", 0.5), ("B", 0.3), ("C", 0.2)]);
        let keep = BTreeSet::from(["A".into(), "B".into()]);
        let out = suppress_and_renormalize(&h, &keep).unwrap();
        assert!((out.mass(&"A".into()) - 0.625).abs() < 1e-15);
        assert!((out.mass(&"B".into()) - 0.375).abs() < 1e-15);
        assert_eq!(out.support_count(), 2);
    }

    #[test]
    fn suppression_superset_is_identity() {
        let h = hist(&[("A", 0.5), ("B", 0.5)]);
        let keep = BTreeSet::from(["A".into(), "B".into(), "Z".into()]);
        assert_eq!(suppress_and_renormalize(&h, &keep).unwrap(), h);
    }

    #[test]
    fn suppression_of_everything_fails() {
        let h = Histogram::point("A".into());
        let keep = BTreeSet::from(["B".into()]);
        assert!(matches!(
            suppress_and_renormalize(&h, &keep),
            Err(Error::ZeroMassAfterSuppression)
        ));
    }

    fn offset_point(origin: (f64, f64), north: f64, east: f64) -> (f64, f64) {
        let m_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (
            origin.0 + north / m_per_deg,
            origin.1 + east / (m_per_deg * origin.0.to_radians().cos()),
        )
    }

    #[test]
    fn origin_is_cell_zero() {
        let origin = (39.9, 116.4);
        for side in [1.0, 100.0, 5000.0] {
            assert_eq!(quantize_geo(39.9, 116.4, side, origin).unwrap().as_str(), "0:0");
        }
    }

    #[test]
    fn floor_division_of_offsets() {
        let origin = (39.9, 116.4);
        let (lat, lon) = offset_point(origin, 150.0, 50.0);
        assert_eq!(quantize_geo(lat, lon, 100.0, origin).unwrap().as_str(), "1:0");
        let (lat, lon) = offset_point(origin, -150.0, -50.0);
        assert_eq!(quantize_geo(lat, lon, 100.0, origin).unwrap().as_str(), "-2:-1");
    }

    #[test]
    fn nearby_points_share_a_cell() {
        let origin = (39.9, 116.4);
        let a = offset_point(origin, 2_400.0, 3_300.0);
        let b = offset_point(origin, 2_408.0, 3_306.0);
        // Both offsets sit inside row 2, col 3 for 1 km cells.
        let (na, ea) = local_offset_m(a.0, a.1, origin);
        let (nb, eb) = local_offset_m(b.0, b.1, origin);
        assert!(((na - nb).powi(2) + (ea - eb).powi(2)).sqrt() < 10.0 + 1e-6);
        let ka = quantize_geo(a.0, a.1, 1000.0, origin).unwrap();
        let kb = quantize_geo(b.0, b.1, 1000.0, origin).unwrap();
        assert_eq!(ka, kb);
        assert_eq!(ka.as_str(), "2:3");
    }

    #[test]
    fn invalid_coordinates() {
        assert!(matches!(
            quantize_geo(f64::NAN, 0.0, 100.0, (0.0, 0.0)),
            Err(Error::InvalidCoordinate { .. })
        ));
        assert!(matches!(
            quantize_geo(0.0, f64::INFINITY, 100.0, (0.0, 0.0)),
            Err(Error::InvalidCoordinate { .. })
        ));
        assert!(quantize_geo(0.0, 0.0, 0.0, (0.0, 0.0)).is_err());
    }
}
