//! Raw timestamped location records and the period/user filters applied to
//! them before histograms are built.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{build_histogram, HistogramSet, LocationId};
use crate::transform::quantize_geo;

pub const SECONDS_PER_WEEK: i64 = 7 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub location: LocationId,
}

impl EventRecord {
    pub fn new(user: impl Into<String>, timestamp: i64, location: LocationId) -> Result<Self> {
        if timestamp < 0 {
            return Err(Error::InvalidInput(format!("negative timestamp {timestamp}")));
        }
        Ok(EventRecord { user: user.into(), timestamp, location })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new(records: Vec<EventRecord>) -> Self {
        EventLog { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.user.as_str()).collect()
    }

    /// Reads a headered `user,timestamp,location` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let rec: EventRecord = row?;
            if rec.timestamp < 0 {
                return Err(Error::InvalidInput(format!(
                    "negative timestamp {} for user {}",
                    rec.timestamp, rec.user
                )));
            }
            records.push(rec);
        }
        Ok(EventLog { records })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Per-user histograms for the given users (all users when `None`),
    /// ordered by user id.
    pub fn histograms(&self, users: Option<&BTreeSet<String>>, labeled: bool) -> Result<HistogramSet> {
        let mut strings: BTreeMap<&str, Vec<LocationId>> = BTreeMap::new();
        for r in &self.records {
            if users.is_none_or(|u| u.contains(&r.user)) {
                strings.entry(&r.user).or_default().push(r.location.clone());
            }
        }
        let entries = strings
            .into_iter()
            .map(|(u, s)| Ok((u.to_string(), build_histogram(&s)?)))
            .collect::<Result<Vec<_>>>()?;
        HistogramSet::new(entries, labeled)
    }
}

/// A raw GPS fix before grid quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoEvent {
    pub user: String,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

/// Reads a headered `user,timestamp,lat,lon` CSV.
pub fn read_geo_csv<R: Read>(reader: R) -> Result<Vec<GeoEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let e: GeoEvent = row?;
        if e.timestamp < 0 {
            return Err(Error::InvalidInput(format!("negative timestamp {} for user {}", e.timestamp, e.user)));
        }
        out.push(e);
    }
    Ok(out)
}

/// South-west corner of the fixes, the default grid origin.
pub fn geo_origin(events: &[GeoEvent]) -> Option<(f64, f64)> {
    events.iter().fold(None, |acc, e| match acc {
        None => Some((e.lat, e.lon)),
        Some((lat, lon)) => Some((lat.min(e.lat), lon.min(e.lon))),
    })
}

/// Replaces every fix by its grid cell of side `cell_side` meters.
pub fn quantize_events(events: &[GeoEvent], cell_side: f64, origin: (f64, f64)) -> Result<EventLog> {
    events
        .iter()
        .map(|e| {
            let cell = quantize_geo(e.lat, e.lon, cell_side, origin)?;
            EventRecord::new(e.user.clone(), e.timestamp, cell)
        })
        .collect::<Result<Vec<_>>>()
        .map(EventLog::new)
}

/// Splits a log at `boundary`: `[.., boundary)` and `[boundary, ..)`.
pub fn split_by_period(log: &EventLog, boundary: i64) -> (EventLog, EventLog) {
    let (before, after) = log.records.iter().cloned().partition(|r| r.timestamp < boundary);
    (EventLog::new(before), EventLog::new(after))
}

/// Users with at least one record in each log.
pub fn filter_active_users(a: &EventLog, b: &EventLog) -> BTreeSet<String> {
    let ua = a.users();
    b.users()
        .into_iter()
        .filter(|u| ua.contains(u))
        .map(str::to_string)
        .collect()
}

/// Per-user split into the first and second half of the user's active weeks.
///
/// Weeks are counted from the epoch. Users with fewer than `min_active_weeks`
/// active weeks are dropped. With an odd number of active weeks the middle
/// week goes to the first half.
pub fn split_by_active_weeks(log: &EventLog, min_active_weeks: usize) -> (EventLog, EventLog) {
    let mut weeks: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    for r in &log.records {
        weeks.entry(&r.user).or_default().insert(r.timestamp.div_euclid(SECONDS_PER_WEEK));
    }
    let cut: BTreeMap<&str, i64> = weeks
        .iter()
        .filter(|(_, w)| w.len() >= min_active_weeks.max(2))
        .map(|(u, w)| {
            let first_half = w.len().div_ceil(2);
            (*u, *w.iter().nth(first_half - 1).unwrap())
        })
        .collect();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for r in &log.records {
        if let Some(&last_week) = cut.get(r.user.as_str()) {
            if r.timestamp.div_euclid(SECONDS_PER_WEEK) <= last_week {
                first.push(r.clone());
            } else {
                second.push(r.clone());
            }
        }
    }
    (EventLog::new(first), EventLog::new(second))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, t: i64, l: &str) -> EventRecord {
        EventRecord::new(u, t, l.into()).unwrap()
    }

    #[test]
    fn split_is_half_open() {
        let log = EventLog::new(vec![rec("u", 10, "A"), rec("u", 20, "B"), rec("u", 30, "C")]);
        let (a, b) = split_by_period(&log, 20);
        assert_eq!(a.records.iter().map(|r| r.timestamp).collect::<Vec<_>>(), vec![10]);
        assert_eq!(b.records.iter().map(|r| r.timestamp).collect::<Vec<_>>(), vec![20, 30]);
    }

    #[test]
    fn split_of_empty_log() {
        let (a, b) = split_by_period(&EventLog::default(), 5);
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn boundary_below_everything() {
        let log = EventLog::new(vec![rec("u", 10, "A"), rec("v", 20, "B")]);
        let (a, b) = split_by_period(&log, 0);
        assert!(a.is_empty());
        assert_eq!(b, log);
    }

    #[test]
    fn active_users_intersection() {
        let a = EventLog::new(vec![rec("u1", 1, "A"), rec("u2", 2, "A")]);
        let b = EventLog::new(vec![rec("u2", 3, "A"), rec("u3", 4, "A")]);
        assert_eq!(filter_active_users(&a, &b), BTreeSet::from(["u2".to_string()]));
        let c = EventLog::new(vec![rec("u9", 1, "A")]);
        assert!(filter_active_users(&a, &c).is_empty());
        assert_eq!(filter_active_users(&a, &a).len(), 2);
    }

    #[test]
    fn negative_timestamp_rejected() {
        assert!(EventRecord::new("u", -1, "A".into()).is_err());
        let csv = "user,timestamp,location\nu,-5,A\n";
        assert!(EventLog::read_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn csv_roundtrip_and_histograms() {
        let csv = "user,timestamp,location\nu,1,A\nu,2,A\nu,3,B\nv,4,C\n";
        let log = EventLog::read_csv(csv.as_bytes()).unwrap();
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
        let set = log.histograms(None, true).unwrap();
        assert_eq!(set.len(), 2);
        let u = set.get("u").unwrap();
        assert!((u.mass(&"A".into()) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(u.sample_count(), 3);
    }

    #[test]
    fn active_week_halves() {
        let w = SECONDS_PER_WEEK;
        let log = EventLog::new(vec![
            rec("u", 0, "A"),
            rec("u", w + 1, "B"),
            rec("u", 2 * w + 1, "C"),
            rec("once", 5, "A"),
        ]);
        let (a, b) = split_by_active_weeks(&log, 2);
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 1);
        assert!(a.records.iter().all(|r| r.user == "u"));
    }

    #[test]
    fn geo_events_quantize_from_south_west_corner() {
        let csv = "user,timestamp,lat,lon\na,0,39.9,116.4\na,60,39.91,116.41\nb,0,39.905,116.39\n";
        let ev = read_geo_csv(csv.as_bytes()).unwrap();
        let origin = geo_origin(&ev).unwrap();
        assert_eq!(origin, (39.9, 116.39));
        let log = quantize_events(&ev, 1000.0, origin).unwrap();
        assert_eq!(log.len(), 3);
        assert!(log.records.iter().all(|r| !r.location.as_str().starts_with('-')));
        assert_eq!(log.records[2].location.as_str(), "0:0");
    }
}
