//! Segment index over trajectory data.
//!
//! Every trajectory is cut into rows of exactly `K` consecutive samples. A
//! row is summarised by the segment joining its first and last sample plus
//! an error radius `E`, the largest squared Euclidean distance of a member
//! to that segment. Summaries are stored column-wise so the per-query
//! lower-bound pass is a flat loop over arrays.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metric::{spatial_terms, temporal_term, Mask, Measurement, Point3, Point4, ScaleParams};

/// Relative shrink applied to the spatial part of a lower bound.
const BOUND_REL_SLACK: f64 = 1e-12;
/// Absolute shrink, in units of `sqrt(sigma_max) * coordinate magnitude`.
const BOUND_ABS_SLACK: f64 = 1e-12;

const SNAPSHOT_MAGIC: &[u8; 4] = b"TNNI";
const SNAPSHOT_VERSION: u32 = 1;

/// Cuts a time-sorted trajectory into rows of `k` indices. A short final row
/// is padded by repeating its own last element.
pub fn partition_trajectory(members: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if members.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if k == 0 {
        return Err(invalid("points per segment must be >= 1"));
    }
    Ok(members
        .chunks(k)
        .map(|chunk| {
            let mut row = chunk.to_vec();
            let last = *chunk.last().expect("chunks are non-empty");
            row.resize(k, last);
            row
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSummary {
    pub a: Point3,
    pub t_a: f64,
    pub b: Point3,
    pub t_b: f64,
    /// `(B - A) / |B - A|²`, or zero for a degenerate segment.
    pub u: Point3,
    /// Largest squared Euclidean distance of a member to the segment (m², unscaled).
    pub e: f64,
    pub members: Vec<usize>,
}

/// Clamped projection parameter of `p` on segment `a + δ (b - a)` using the
/// precomputed `u`.
#[inline]
fn project_euclidean(p: Point3, a: Point3, u: Point3) -> f64 {
    let d = (p.x - a.x) * u.x + (p.y - a.y) * u.y + (p.z - a.z) * u.z;
    d.clamp(0.0, 1.0)
}

fn direction_term(a: Point3, b: Point3) -> Point3 {
    let (dx, dy, dz) = (b.x - a.x, b.y - a.y, b.z - a.z);
    let n2 = dx * dx + dy * dy + dz * dz;
    if n2 > 0.0 {
        Point3::new(dx / n2, dy / n2, dz / n2)
    } else {
        Point3::default()
    }
}

/// Squared Euclidean distance of `p` to segment `ab`.
pub fn point_segment_distance_sq(p: Point3, a: Point3, b: Point3) -> f64 {
    let u = direction_term(a, b);
    let delta = project_euclidean(p, a, u);
    let q = Point3::new(
        a.x + delta * (b.x - a.x),
        a.y + delta * (b.y - a.y),
        a.z + delta * (b.z - a.z),
    );
    let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
    dx * dx + dy * dy + dz * dz
}

pub fn build_segment_summary(members: &[Measurement]) -> Result<SegmentSummary> {
    let first = members.first().ok_or(Error::EmptyTrajectory)?;
    let last = members.last().expect("non-empty");
    let a = first.point.spatial();
    let b = last.point.spatial();
    let u = direction_term(a, b);
    let e = members
        .iter()
        .map(|m| point_segment_distance_sq(m.point.spatial(), a, b))
        .fold(0.0, f64::max);
    Ok(SegmentSummary {
        a,
        t_a: first.point.t,
        b,
        t_b: last.point.t,
        u,
        e,
        members: members.iter().map(|m| m.index).collect(),
    })
}

/// Per-query constants for the lower-bound kernel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundQuery {
    p: Point3,
    t: f64,
    cutoff: f64,
    sigma: ScaleParams,
    sqrt_sigma_max: f64,
    abs_slack: f64,
    isotropic: bool,
}

impl BoundQuery {
    pub(crate) fn new(q: Point4, sigma: ScaleParams, mask: Mask, coord_mag: f64) -> Self {
        let sqrt_sigma_max = sigma.sigma_max().sqrt();
        let mag = coord_mag.max(q.spatial().max_abs()).max(1.0);
        Self {
            p: q.spatial(),
            t: q.t,
            cutoff: mask.cutoff(q.t),
            sigma,
            sqrt_sigma_max,
            abs_slack: BOUND_ABS_SLACK * sqrt_sigma_max * mag,
            isotropic: sigma.sigma_xy == sigma.sigma_z,
        }
    }

    pub(crate) fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

/// Structure-of-arrays segment index over a shared dataset.
#[derive(Debug, Clone)]
pub struct TrajectoryIndex {
    dataset: Arc<Dataset>,
    k: usize,
    a: Vec<[f64; 3]>,
    b: Vec<[f64; 3]>,
    t_a: Vec<f64>,
    t_b: Vec<f64>,
    u: Vec<[f64; 3]>,
    e: Vec<f64>,
    membership: Vec<usize>,
    coord_mag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexStats {
    pub segments: usize,
    pub points: usize,
    pub points_per_segment: usize,
    pub mean_error: f64,
    pub max_error: f64,
}

impl TrajectoryIndex {
    /// Partitions and summarises every trajectory of `dataset`.
    pub fn build(dataset: Arc<Dataset>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("points per segment must be >= 1"));
        }
        if let Some(id) = dataset.check_sorted() {
            return Err(Error::UnsortedTrajectory(id.to_string()));
        }
        let t_est: usize = dataset.trajectories().iter().map(|tr| tr.range.len().div_ceil(k)).sum();
        let mut idx = Self {
            k,
            a: Vec::with_capacity(t_est),
            b: Vec::with_capacity(t_est),
            t_a: Vec::with_capacity(t_est),
            t_b: Vec::with_capacity(t_est),
            u: Vec::with_capacity(t_est),
            e: Vec::with_capacity(t_est),
            membership: Vec::with_capacity(t_est * k),
            coord_mag: dataset.coordinate_magnitude(),
            dataset: Arc::clone(&dataset),
        };
        let mut buf = Vec::with_capacity(k);
        for tr in dataset.trajectories() {
            let members: Vec<usize> = tr.range.clone().collect();
            for row in partition_trajectory(&members, k)? {
                buf.clear();
                buf.extend(row.iter().map(|&i| dataset.measurement(i)));
                idx.push(build_segment_summary(&buf)?);
            }
        }
        Ok(idx)
    }

    fn push(&mut self, s: SegmentSummary) {
        self.a.push([s.a.x, s.a.y, s.a.z]);
        self.b.push([s.b.x, s.b.y, s.b.z]);
        self.t_a.push(s.t_a);
        self.t_b.push(s.t_b);
        self.u.push([s.u.x, s.u.y, s.u.z]);
        self.e.push(s.e);
        self.membership.extend_from_slice(&s.members);
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    /// Points per segment.
    pub fn points_per_segment(&self) -> usize {
        self.k
    }

    pub fn num_segments(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    #[inline]
    pub fn members(&self, seg: usize) -> &[usize] {
        &self.membership[seg * self.k..(seg + 1) * self.k]
    }

    pub fn segment(&self, seg: usize) -> SegmentSummary {
        let p = |v: [f64; 3]| Point3::new(v[0], v[1], v[2]);
        SegmentSummary {
            a: p(self.a[seg]),
            t_a: self.t_a[seg],
            b: p(self.b[seg]),
            t_b: self.t_b[seg],
            u: p(self.u[seg]),
            e: self.e[seg],
            members: self.members(seg).to_vec(),
        }
    }

    pub fn errors(&self) -> &[f64] {
        &self.e
    }

    pub fn stats(&self) -> IndexStats {
        let n = self.e.len();
        IndexStats {
            segments: n,
            points: self.dataset.len(),
            points_per_segment: self.k,
            mean_error: if n == 0 { 0.0 } else { self.e.iter().sum::<f64>() / n as f64 },
            max_error: self.e.iter().copied().fold(0.0, f64::max),
        }
    }

    pub(crate) fn bound_query(&self, q: Point4, sigma: ScaleParams, mask: Mask) -> BoundQuery {
        BoundQuery::new(q, sigma, mask, self.coord_mag)
    }

    /// Lower bound on the masked scaled distance from the query to every
    /// valid member of segment `seg`; `+inf` when the segment starts after
    /// the mask cutoff.
    ///
    /// The spatial part uses the triangle inequality in the scaled norm:
    /// with `a` the scaled distance from the query to the segment and
    /// `b = sqrt(sigma_max * E)` the largest scaled offset of a member from
    /// the segment, every member is at least `max(a - b, 0)` away.
    #[inline]
    pub(crate) fn lower_bound(&self, seg: usize, q: &BoundQuery) -> f64 {
        let t_a = self.t_a[seg];
        if t_a > q.cutoff {
            return f64::INFINITY;
        }
        let a = self.a[seg];
        let b = self.b[seg];
        let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let ap = [q.p.x - a[0], q.p.y - a[1], q.p.z - a[2]];
        let delta = if q.isotropic {
            let u = self.u[seg];
            (ap[0] * u[0] + ap[1] * u[1] + ap[2] * u[2]).clamp(0.0, 1.0)
        } else {
            let (sxy, sz) = (q.sigma.sigma_xy, q.sigma.sigma_z);
            let den = sxy * (ab[0] * ab[0] + ab[1] * ab[1]) + sz * ab[2] * ab[2];
            if den > 0.0 {
                ((sxy * (ap[0] * ab[0] + ap[1] * ab[1]) + sz * ap[2] * ab[2]) / den).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let ps = [a[0] + delta * ab[0], a[1] + delta * ab[1], a[2] + delta * ab[2]];
        let spatial = spatial_terms(ps[0] - q.p.x, ps[1] - q.p.y, ps[2] - q.p.z, &q.sigma);
        let reach = q.sqrt_sigma_max * self.e[seg].sqrt();
        let gap = spatial.sqrt() * (1.0 - BOUND_REL_SLACK) - reach * (1.0 + BOUND_REL_SLACK) - q.abs_slack;
        let spatial_lb = if gap > 0.0 { gap * gap } else { 0.0 };

        // Valid members have t in [t_A, min(t_B, cutoff)].
        let hi = self.t_b[seg].min(q.cutoff);
        let ts = q.t.clamp(t_a, hi.max(t_a));
        spatial_lb + temporal_term(q.t - ts, &q.sigma)
    }

    pub(crate) fn lower_bounds_into(&self, q: &BoundQuery, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.num_segments()).map(|s| self.lower_bound(s, q)));
    }

    /// Writes the segment arrays in little-endian order
    /// `A | B | t_A | t_B | U | E | membership` after a versioned header.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.k as u64).to_le_bytes())?;
        w.write_all(&(self.num_segments() as u64).to_le_bytes())?;
        w.write_all(&(self.dataset.len() as u64).to_le_bytes())?;
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        for r in &self.a {
            r.iter().try_for_each(|&v| put(v))?;
        }
        for r in &self.b {
            r.iter().try_for_each(|&v| put(v))?;
        }
        self.t_a.iter().try_for_each(|&v| put(v))?;
        self.t_b.iter().try_for_each(|&v| put(v))?;
        for r in &self.u {
            r.iter().try_for_each(|&v| put(v))?;
        }
        self.e.iter().try_for_each(|&v| put(v))?;
        for &m in &self.membership {
            w.write_all(&(m as u64).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`TrajectoryIndex::write_snapshot`] and
    /// attaches it to `dataset`, which must be the store it was built from.
    pub fn read_snapshot<R: Read>(mut r: R, dataset: Arc<Dataset>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let k = read_u64(&mut r)? as usize;
        let t = read_u64(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        if n != dataset.len() {
            return Err(Error::Snapshot(format!(
                "snapshot covers {n} points, dataset has {}",
                dataset.len()
            )));
        }
        if k == 0 {
            return Err(Error::Snapshot("zero points per segment".into()));
        }
        let a = read_triples(&mut r, t)?;
        let b = read_triples(&mut r, t)?;
        let t_a = (0..t).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let t_b = (0..t).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let u = read_triples(&mut r, t)?;
        let e = (0..t).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let membership = (0..t * k)
            .map(|_| {
                let m = read_u64(&mut r)? as usize;
                if m >= n {
                    return Err(Error::Snapshot(format!("member {m} out of range")));
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coord_mag: dataset.coordinate_magnitude(),
            dataset,
            k,
            a,
            b,
            t_a,
            t_b,
            u,
            e,
            membership,
        })
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    Ok(u64::from_le_bytes(b8))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_triples<R: Read>(r: &mut R, n: usize) -> Result<Vec<[f64; 3]>> {
    (0..n).map(|_| Ok([read_f64(r)?, read_f64(r)?, read_f64(r)?])).collect()
}

/// Lower bounds from one query to every segment of `index`.
pub fn segment_lower_bounds(
    query: Point4,
    sigma: &ScaleParams,
    mask: Mask,
    index: &TrajectoryIndex,
) -> Result<Vec<f64>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    sigma.validate()?;
    mask.validate()?;
    let q = index.bound_query(query, *sigma, mask);
    let mut out = Vec::with_capacity(index.num_segments());
    index.lower_bounds_into(&q, &mut out);
    Ok(out)
}
