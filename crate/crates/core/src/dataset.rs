//! In-memory measurement store.
//!
//! Columns are kept as separate vectors and each trajectory occupies a
//! contiguous range of global indices.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Range;

use crate::metric::{Measurement, Point3, Point4, WindVector};

/// One row as it appears in a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub trajectory_id: String,
    pub point: Point4,
    pub wind: WindVector,
}

impl Record {
    pub fn new(trajectory_id: impl Into<String>, point: Point4, wind: WindVector) -> Self {
        Self {
            trajectory_id: trajectory_id.into(),
            point,
            wind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub range: Range<usize>,
}

/// Outcome of [`Dataset::from_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortReport {
    pub rows: usize,
    pub trajectories: usize,
    /// True when the input was not already grouped and time-sorted.
    pub reordered: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    t: Vec<f64>,
    wind_x: Vec<f64>,
    wind_y: Vec<f64>,
    owner: Vec<u32>,
    trajectories: Vec<Trajectory>,
}

fn record_order(a: &Record, b: &Record) -> Ordering {
    a.point
        .t
        .total_cmp(&b.point.t)
        .then(a.point.x.total_cmp(&b.point.x))
        .then(a.point.y.total_cmp(&b.point.y))
        .then(a.point.z.total_cmp(&b.point.z))
        .then(a.wind.sx.total_cmp(&b.wind.sx))
        .then(a.wind.sy.total_cmp(&b.wind.sy))
}

impl Dataset {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Groups rows by trajectory id (ids in lexicographic order) and sorts
    /// each group by time. Ties are broken on the remaining fields so the
    /// result does not depend on input row order.
    pub fn from_records(records: Vec<Record>) -> (Self, SortReport) {
        let rows = records.len();
        let mut already_sorted = true;
        let mut prev: Option<&Record> = None;
        let mut seen_ids: Vec<&str> = Vec::new();
        for r in &records {
            match prev {
                Some(p) if p.trajectory_id == r.trajectory_id => {
                    if record_order(p, r) == Ordering::Greater {
                        already_sorted = false;
                    }
                }
                _ => {
                    if let Some(last) = seen_ids.last() {
                        if *last >= r.trajectory_id.as_str() {
                            already_sorted = false;
                        }
                    }
                    seen_ids.push(&r.trajectory_id);
                }
            }
            prev = Some(r);
        }

        let mut groups: BTreeMap<String, Vec<Record>> = BTreeMap::new();
        for r in records {
            groups.entry(r.trajectory_id.clone()).or_default().push(r);
        }
        let groups: Vec<(String, Vec<Record>)> = groups
            .into_iter()
            .map(|(id, mut rs)| {
                rs.sort_by(record_order);
                (id, rs)
            })
            .collect();
        let ds = Self::from_trajectories(groups);
        let report = SortReport {
            rows,
            trajectories: ds.trajectories.len(),
            reordered: !already_sorted,
        };
        (ds, report)
    }

    /// Builds a store from pre-grouped trajectories, keeping the given order.
    /// Records' own `trajectory_id` fields are ignored in favour of the group id.
    /// No sorting is done; see [`Dataset::check_sorted`].
    pub fn from_trajectories(groups: Vec<(String, Vec<Record>)>) -> Self {
        let n: usize = groups.iter().map(|(_, g)| g.len()).sum();
        let mut ds = Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            wind_x: Vec::with_capacity(n),
            wind_y: Vec::with_capacity(n),
            owner: Vec::with_capacity(n),
            trajectories: Vec::with_capacity(groups.len()),
        };
        for (id, rows) in groups {
            if rows.is_empty() {
                continue;
            }
            let start = ds.x.len();
            let owner = ds.trajectories.len() as u32;
            for r in rows {
                ds.x.push(r.point.x);
                ds.y.push(r.point.y);
                ds.z.push(r.point.z);
                ds.t.push(r.point.t);
                ds.wind_x.push(r.wind.sx);
                ds.wind_y.push(r.wind.sy);
                ds.owner.push(owner);
            }
            ds.trajectories.push(Trajectory {
                id,
                range: start..ds.x.len(),
            });
        }
        ds
    }

    /// Returns the id of the first trajectory whose timestamps decrease.
    pub fn check_sorted(&self) -> Option<&str> {
        self.trajectories
            .iter()
            .find(|tr| self.t[tr.range.clone()].windows(2).any(|w| w[0] > w[1]))
            .map(|tr| tr.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    #[inline]
    pub fn point(&self, i: usize) -> Point4 {
        Point4::new(self.x[i], self.y[i], self.z[i], self.t[i])
    }

    #[inline]
    pub fn position(&self, i: usize) -> Point3 {
        Point3::new(self.x[i], self.y[i], self.z[i])
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t[i]
    }

    #[inline]
    pub fn wind(&self, i: usize) -> WindVector {
        WindVector::new(self.wind_x[i], self.wind_y[i])
    }

    pub fn measurement(&self, i: usize) -> Measurement {
        Measurement {
            point: self.point(i),
            wind: self.wind(i),
            trajectory: self.owner[i],
            index: i,
        }
    }

    pub fn trajectory_id(&self, i: usize) -> &str {
        &self.trajectories[self.owner[i] as usize].id
    }

    pub fn record(&self, i: usize) -> Record {
        Record::new(self.trajectory_id(i), self.point(i), self.wind(i))
    }

    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn zs(&self) -> &[f64] {
        &self.z
    }

    pub fn ts(&self) -> &[f64] {
        &self.t
    }

    pub fn winds_x(&self) -> &[f64] {
        &self.wind_x
    }

    pub fn winds_y(&self) -> &[f64] {
        &self.wind_y
    }

    /// Largest absolute spatial coordinate in the store.
    pub fn coordinate_magnitude(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .chain(&self.z)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let lo = self.t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Per-axis (min, max) of the spatial coordinates.
    pub fn spatial_bounds(&self) -> Option<[(f64, f64); 3]> {
        if self.is_empty() {
            return None;
        }
        let mm = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        };
        Some([mm(&self.x), mm(&self.y), mm(&self.z)])
    }

    /// Median timestamp (lower median).
    pub fn median_time(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut ts = self.t.clone();
        let mid = (ts.len() - 1) / 2;
        let (_, m, _) = ts.select_nth_unstable_by(mid, f64::total_cmp);
        Some(*m)
    }
}
