//! Exact masked k-nearest-neighbor search.
//!
//! [`tnn_query`] walks segments in increasing lower-bound order, fetching
//! `F` segments per round and merging their members into a running top-k.
//! A query is complete once its k-th distance is strictly below the next
//! segment bound, or when no unmasked segment is left. Completed queries
//! leave the active batch after every round. [`linear_query`] is the
//! exhaustive reference with the same ordering rules.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::index::{BoundQuery, TrajectoryIndex};
use crate::metric::{spatial_terms, temporal_term, Mask, Point4, ScaleParams};

pub const DEFAULT_FETCH: usize = 8;
pub const DEFAULT_POINTS_PER_SEGMENT: usize = 32;

/// Scale parameters shared by a batch or given per query.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    Global(ScaleParams),
    PerQuery(Vec<ScaleParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub points: Vec<Point4>,
    pub k: usize,
    pub sigma: SigmaSpec,
    pub mask: Mask,
    /// Segments fetched per round (`F`).
    pub fetch: usize,
}

impl QueryBatch {
    pub fn new(points: Vec<Point4>, k: usize, sigma: ScaleParams, mask: Mask) -> Self {
        Self {
            points,
            k,
            sigma: SigmaSpec::Global(sigma),
            mask,
            fetch: DEFAULT_FETCH,
        }
    }

    pub fn with_fetch(mut self, fetch: usize) -> Self {
        self.fetch = fetch;
        self
    }

    pub fn with_per_query_sigma(mut self, sigmas: Vec<ScaleParams>) -> Self {
        self.sigma = SigmaSpec::PerQuery(sigmas);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn sigma_for(&self, i: usize) -> ScaleParams {
        match &self.sigma {
            SigmaSpec::Global(s) => *s,
            SigmaSpec::PerQuery(v) => v[i],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(invalid("query batch is empty"));
        }
        if self.k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        if self.fetch == 0 {
            return Err(invalid("segments per fetch must be >= 1"));
        }
        if let Some(p) = self.points.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("non-finite query point {p:?}")));
        }
        self.mask.validate()?;
        match &self.sigma {
            SigmaSpec::Global(s) => s.validate(),
            SigmaSpec::PerQuery(v) => {
                if v.len() != self.points.len() {
                    return Err(invalid(format!(
                        "{} per-query sigmas for {} queries",
                        v.len(),
                        self.points.len()
                    )));
                }
                v.iter().try_for_each(ScaleParams::validate)
            }
        }
    }
}

/// Result for one query: neighbors sorted by (distance, index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// Point distance evaluations, masked points included.
    pub comparisons: u64,
    /// Fetch rounds (0 for the linear scan).
    pub rounds: u32,
}

impl NeighborSet {
    pub fn found(&self) -> usize {
        self.indices.len()
    }

    /// Distance of the furthest retained neighbor.
    pub fn kth_distance(&self) -> Option<f64> {
        self.distances.last().copied()
    }

    fn from_pairs(pairs: Vec<(f64, usize)>, comparisons: u64, rounds: u32) -> Self {
        let (distances, indices) = pairs.into_iter().unzip();
        Self {
            indices,
            distances,
            comparisons,
            rounds,
        }
    }

    fn pairs(&self) -> Vec<(f64, usize)> {
        self.distances.iter().copied().zip(self.indices.iter().copied()).collect()
    }
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Process queries on the rayon pool.
    pub parallel: bool,
    /// Sort all segment bounds up front instead of selecting them in
    /// growing chunks.
    pub full_sort: bool,
    /// Queries held in memory at once; each keeps one bound per segment.
    pub max_batch: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            full_sort: false,
            max_batch: 256,
        }
    }
}

impl SearchOptions {
    pub fn sequential() -> Self {
        Self {
            parallel: false,
            ..Self::default()
        }
    }
}

#[inline]
fn cmp_pair(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Scaled distance from `q` to dataset point `i`, in the same association
/// as [`crate::metric::scaled_distance_sq`].
#[inline]
pub(crate) fn point_distance(q: &Point4, ds: &Dataset, i: usize, sigma: &ScaleParams) -> f64 {
    let (x, y, z, t) = (ds.xs()[i], ds.ys()[i], ds.zs()[i], ds.ts()[i]);
    spatial_terms(q.x - x, q.y - y, q.z - z, sigma) + temporal_term(q.t - t, sigma)
}

/// Sorted union of `current` and `candidates`, deduplicated by index and
/// truncated to `k`. Non-finite candidates are dropped.
pub fn merge_topk(current: &NeighborSet, candidates: &[(usize, f64)], k: usize) -> NeighborSet {
    let mut all = current.pairs();
    all.extend(candidates.iter().filter(|c| c.1.is_finite()).map(|&(i, d)| (d, i)));
    all.sort_by(cmp_pair);
    let mut seen = std::collections::HashSet::with_capacity(all.len());
    all.retain(|p| seen.insert(p.1));
    all.truncate(k);
    NeighborSet::from_pairs(all, current.comparisons, current.rounds)
}

/// Merges sorted `best` with unsorted `fresh`, keeping the `k` smallest.
/// Equal (distance, index) pairs collapse to one.
fn merge_sorted(best: &mut Vec<(f64, usize)>, fresh: &mut [(f64, usize)], k: usize, scratch: &mut Vec<(f64, usize)>) {
    if fresh.is_empty() {
        return;
    }
    fresh.sort_unstable_by(cmp_pair);
    scratch.clear();
    let (mut i, mut j) = (0, 0);
    while scratch.len() < k && (i < best.len() || j < fresh.len()) {
        let next = if j >= fresh.len() || (i < best.len() && cmp_pair(&best[i], &fresh[j]) != Ordering::Greater) {
            i += 1;
            best[i - 1]
        } else {
            j += 1;
            fresh[j - 1]
        };
        if scratch.last().is_some_and(|l| l.1 == next.1) {
            continue;
        }
        scratch.push(next);
    }
    std::mem::swap(best, scratch);
}

/// Segment ids in increasing (bound, id) order, sorted lazily.
struct SegmentQueue {
    items: Vec<(f64, usize)>,
    sorted_end: usize,
    cursor: usize,
    chunk: usize,
}

impl SegmentQueue {
    fn new(bounds: &[f64], full_sort: bool, fetch: usize) -> Self {
        let items: Vec<(f64, usize)> = bounds
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_finite())
            .map(|(s, &b)| (b, s))
            .collect();
        let chunk = if full_sort { usize::MAX } else { (4 * fetch).max(64) };
        Self {
            items,
            sorted_end: 0,
            cursor: 0,
            chunk,
        }
    }

    fn ensure_sorted(&mut self, upto: usize) {
        let upto = upto.min(self.items.len());
        while self.sorted_end < upto {
            let rest = &mut self.items[self.sorted_end..];
            let take = self.chunk.min(rest.len());
            if take < rest.len() {
                rest.select_nth_unstable_by(take - 1, cmp_pair);
            }
            rest[..take].sort_unstable_by(cmp_pair);
            self.sorted_end += take;
            self.chunk = self.chunk.saturating_mul(2);
        }
    }

    fn peek(&mut self) -> Option<f64> {
        self.ensure_sorted(self.cursor + 1);
        self.items.get(self.cursor).map(|p| p.0)
    }

    fn take(&mut self, f: usize) -> std::ops::Range<usize> {
        let end = (self.cursor + f).min(self.items.len());
        self.ensure_sorted(end);
        let r = self.cursor..end;
        self.cursor = end;
        r
    }
}

struct QueryState {
    pos: usize,
    point: Point4,
    sigma: ScaleParams,
    cutoff: f64,
    queue: SegmentQueue,
    best: Vec<(f64, usize)>,
    fresh: Vec<(f64, usize)>,
    scratch: Vec<(f64, usize)>,
    comparisons: u64,
    rounds: u32,
    done: bool,
}

impl QueryState {
    fn new(pos: usize, batch: &QueryBatch, index: &TrajectoryIndex, full_sort: bool) -> Self {
        let point = batch.points[pos];
        let sigma = batch.sigma_for(pos);
        let bq: BoundQuery = index.bound_query(point, sigma, batch.mask);
        let mut bounds = Vec::with_capacity(index.num_segments());
        index.lower_bounds_into(&bq, &mut bounds);
        let queue = SegmentQueue::new(&bounds, full_sort, batch.fetch);
        let done = queue.items.is_empty();
        Self {
            pos,
            point,
            sigma,
            cutoff: bq.cutoff(),
            queue,
            best: Vec::with_capacity(batch.k),
            fresh: Vec::new(),
            scratch: Vec::with_capacity(batch.k),
            comparisons: 0,
            rounds: 0,
            done,
        }
    }

    fn step(&mut self, index: &TrajectoryIndex, fetch: usize, k: usize) {
        let ds = index.dataset();
        let ts = ds.ts();
        let segs = self.queue.take(fetch);
        self.rounds += 1;
        self.fresh.clear();
        let kth = (self.best.len() == k).then(|| self.best[k - 1]);
        for slot in segs {
            let seg = self.queue.items[slot].1;
            let members = index.members(seg);
            for (j, &m) in members.iter().enumerate() {
                // Padding repeats the row's last element.
                if j > 0 && members[j - 1] == m {
                    continue;
                }
                self.comparisons += 1;
                if ts[m] > self.cutoff {
                    continue;
                }
                let d = point_distance(&self.point, ds, m, &self.sigma);
                let cand = (d, m);
                if kth.is_none_or(|kth| cmp_pair(&cand, &kth) == Ordering::Less) {
                    self.fresh.push(cand);
                }
            }
        }
        merge_sorted(&mut self.best, &mut self.fresh, k, &mut self.scratch);

        match self.queue.peek() {
            None => self.done = true,
            Some(next) => {
                if self.best.len() == k && self.best[k - 1].0 < next {
                    debug_assert!(next >= self.best[k - 1].0);
                    self.done = true;
                }
            }
        }
    }

    fn finish(self) -> NeighborSet {
        NeighborSet::from_pairs(self.best, self.comparisons, self.rounds)
    }
}

/// Exact masked k-NN using segment lower bounds.
pub fn tnn_query(batch: &QueryBatch, index: &TrajectoryIndex) -> Result<Vec<NeighborSet>> {
    tnn_query_with(batch, index, &SearchOptions::default())
}

pub fn tnn_query_with(batch: &QueryBatch, index: &TrajectoryIndex, opts: &SearchOptions) -> Result<Vec<NeighborSet>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    batch.validate()?;
    let mut out: Vec<Option<NeighborSet>> = vec![None; batch.len()];
    let chunk = opts.max_batch.max(1);
    for start in (0..batch.len()).step_by(chunk) {
        let end = (start + chunk).min(batch.len());
        let init = |pos| QueryState::new(pos, batch, index, opts.full_sort);
        let mut active: Vec<QueryState> = if opts.parallel {
            (start..end).into_par_iter().map(init).collect()
        } else {
            (start..end).map(init).collect()
        };
        let max_rounds = index.num_segments().div_ceil(batch.fetch);
        let mut round = 0;
        loop {
            // Completed queries leave the batch; order of the rest is kept.
            let mut still = Vec::with_capacity(active.len());
            for st in active {
                if st.done {
                    let pos = st.pos;
                    out[pos] = Some(st.finish());
                } else {
                    still.push(st);
                }
            }
            active = still;
            if active.is_empty() {
                break;
            }
            assert!(round < max_rounds, "search exceeded {max_rounds} rounds");
            if opts.parallel {
                active
                    .par_iter_mut()
                    .for_each(|st| st.step(index, batch.fetch, batch.k));
            } else {
                active.iter_mut().for_each(|st| st.step(index, batch.fetch, batch.k));
            }
            round += 1;
        }
    }
    Ok(out.into_iter().map(|o| o.expect("every query completes")).collect())
}

/// Exhaustive masked k-NN; the reference for every other method.
pub fn linear_query(batch: &QueryBatch, dataset: &Dataset) -> Result<Vec<NeighborSet>> {
    linear_query_with(batch, dataset, &SearchOptions::default())
}

pub fn linear_query_with(batch: &QueryBatch, dataset: &Dataset, opts: &SearchOptions) -> Result<Vec<NeighborSet>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    batch.validate()?;
    let one = |pos: usize| {
        let q = batch.points[pos];
        let sigma = batch.sigma_for(pos);
        let cutoff = batch.mask.cutoff(q.t);
        let ts = dataset.ts();
        let mut buf: Vec<(f64, usize)> = (0..dataset.len())
            .filter(|&i| ts[i] <= cutoff)
            .map(|i| (point_distance(&q, dataset, i, &sigma), i))
            .collect();
        let k = batch.k;
        if buf.len() > k {
            buf.select_nth_unstable_by(k - 1, cmp_pair);
            buf.truncate(k);
        }
        buf.sort_unstable_by(cmp_pair);
        NeighborSet::from_pairs(buf, dataset.len() as u64, 0)
    };
    Ok(if opts.parallel {
        (0..batch.len()).into_par_iter().map(one).collect()
    } else {
        (0..batch.len()).map(one).collect()
    })
}

/// Checks two result lists for identical index sets and distances within
/// `rel_tol`. Returns a description of the first mismatch.
pub fn compare_results(expected: &[NeighborSet], actual: &[NeighborSet], rel_tol: f64) -> std::result::Result<(), String> {
    if expected.len() != actual.len() {
        return Err(format!("{} vs {} result sets", expected.len(), actual.len()));
    }
    for (q, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e.indices != a.indices {
            return Err(format!("query {q}: indices {:?} vs {:?}", e.indices, a.indices));
        }
        for (de, da) in e.distances.iter().zip(&a.distances) {
            if (de - da).abs() > rel_tol * de.abs().max(da.abs()).max(f64::MIN_POSITIVE) {
                return Err(format!("query {q}: distance {de} vs {da}"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::metric::WindVector;
    use std::sync::Arc;

    fn ns(pairs: &[(usize, f64)]) -> NeighborSet {
        NeighborSet {
            indices: pairs.iter().map(|p| p.0).collect(),
            distances: pairs.iter().map(|p| p.1).collect(),
            comparisons: 0,
            rounds: 0,
        }
    }

    #[test]
    fn merge_identity_and_truncate() {
        let cur = ns(&[(3, 1.0), (1, 2.0)]);
        assert_eq!(merge_topk(&cur, &[], 5), cur);
        let out = merge_topk(&NeighborSet::default(), &[(7, 3.0), (2, 1.0), (9, 2.0)], 2);
        assert_eq!(out.indices, vec![2, 9]);
        assert_eq!(out.distances, vec![1.0, 2.0]);
    }

    #[test]
    fn merge_dedup_and_masked() {
        let cur = ns(&[(4, 1.0), (5, 3.0)]);
        let out = merge_topk(&cur, &[(5, 3.0), (6, f64::INFINITY), (1, 3.0)], 4);
        assert_eq!(out.indices, vec![4, 1, 5]);
    }

    #[test]
    fn merge_ties_by_index() {
        let out = merge_topk(&NeighborSet::default(), &[(8, 1.0), (2, 1.0), (5, 1.0)], 2);
        assert_eq!(out.indices, vec![2, 5]);
    }

    #[test]
    fn internal_merge_matches_public() {
        let mut best = vec![(1.0, 4), (3.0, 5)];
        let mut fresh = vec![(3.0, 5), (0.5, 9), (3.0, 1)];
        let mut scratch = Vec::new();
        merge_sorted(&mut best, &mut fresh, 3, &mut scratch);
        assert_eq!(best, vec![(0.5, 9), (1.0, 4), (3.0, 1)]);
    }

    fn padded_dataset() -> Arc<Dataset> {
        // 6 points on one line, K = 4 gives a padded second row [4, 5, 5, 5].
        let rows = (0..6)
            .map(|i| Record::new("a", Point4::new(i as f64, 0.0, 0.0, i as f64), WindVector::default()))
            .collect();
        Arc::new(Dataset::from_trajectories(vec![("a".into(), rows)]))
    }

    #[test]
    fn padded_duplicates_appear_once() {
        let ds = padded_dataset();
        let idx = TrajectoryIndex::build(Arc::clone(&ds), 4).unwrap();
        let s = ScaleParams::isotropic(1.0).unwrap();
        let b = QueryBatch::new(vec![Point4::new(5.0, 0.0, 0.0, 5.0)], 6, s, Mask::Unmasked).with_fetch(1);
        let r = tnn_query(&b, &idx).unwrap();
        assert_eq!(r[0].indices, vec![5, 4, 3, 2, 1, 0]);
        assert_eq!(r[0].comparisons, 6);
        compare_results(&linear_query(&b, &ds).unwrap(), &r, 1e-9).unwrap();
    }

    #[test]
    fn self_match_and_short_results() {
        let ds = padded_dataset();
        let idx = TrajectoryIndex::build(Arc::clone(&ds), 2).unwrap();
        let s = ScaleParams::isotropic(1.0).unwrap();
        let b = QueryBatch::new(vec![ds.point(3)], 1, s, Mask::Window(0.0));
        let r = tnn_query(&b, &idx).unwrap();
        assert_eq!((r[0].indices[0], r[0].distances[0]), (3, 0.0));

        // Only points 0..=2 are old enough.
        let b = QueryBatch::new(vec![ds.point(5)], 10, s, Mask::Window(3.0));
        let r = tnn_query(&b, &idx).unwrap();
        assert_eq!(r[0].indices, vec![2, 1, 0]);
        assert_eq!(linear_query(&b, &ds).unwrap()[0].indices, vec![2, 1, 0]);

        // Nothing old enough.
        let b = QueryBatch::new(vec![ds.point(0)], 3, s, Mask::Window(1.0));
        let r = tnn_query(&b, &idx).unwrap();
        assert_eq!(r[0].found(), 0);
        assert_eq!(r[0].rounds, 0);
    }

    #[test]
    fn linear_total_order() {
        let ds = padded_dataset();
        let s = ScaleParams::isotropic(1.0).unwrap();
        let b = QueryBatch::new(vec![Point4::new(2.5, 0.0, 0.0, 10.0)], 6, s, Mask::Window(0.0));
        let r = linear_query(&b, &ds).unwrap();
        assert_eq!(r[0].found(), 6);
        assert!(r[0].distances.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(r[0].comparisons, 6);
    }

    #[test]
    fn errors() {
        let s = ScaleParams::isotropic(1.0).unwrap();
        let empty = TrajectoryIndex::build(Arc::new(Dataset::empty()), 4).unwrap();
        let b = QueryBatch::new(vec![Point4::default()], 1, s, Mask::Unmasked);
        assert!(matches!(tnn_query(&b, &empty), Err(Error::EmptyIndex)));
        assert!(matches!(linear_query(&b, &Dataset::empty()), Err(Error::EmptyDataset)));
        let idx = TrajectoryIndex::build(padded_dataset(), 4).unwrap();
        let mut bad = b.clone();
        bad.k = 0;
        assert!(tnn_query(&bad, &idx).is_err());
        let bad = b.clone().with_fetch(0);
        assert!(tnn_query(&bad, &idx).is_err());
        let bad = b.with_per_query_sigma(vec![]);
        assert!(tnn_query(&bad, &idx).is_err());
    }
}
