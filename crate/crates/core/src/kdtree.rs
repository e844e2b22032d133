//! Scaled, time-masked KD-tree baseline.
//!
//! The tree splits on `(x, y, z, t)` in turn at the median and keeps a tight
//! bounding box per node, so `sigma` and the mask are applied at query time.
//! Search is best-first on the scaled box distance; subtrees whose earliest
//! timestamp is past the cutoff are skipped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metric::{spatial_terms, temporal_term, Mask, Point4, ScaleParams};
use crate::search::{point_distance, NeighborSet, QueryBatch};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitDim {
    X,
    Y,
    Z,
    T,
}

impl SplitDim {
    fn from_depth(depth: usize) -> Self {
        [SplitDim::X, SplitDim::Y, SplitDim::Z, SplitDim::T][depth % 4]
    }

    fn axis(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Split {
        dim: SplitDim,
        value: f64,
        left: usize,
        right: usize,
    },
    /// Range into the tree's permutation.
    Leaf { start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdNode {
    /// Tight box over `(x, y, z, t)`.
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub min_t: f64,
    pub kind: NodeKind,
}

/// KD-tree result with traversal telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct KdResult {
    pub neighbors: NeighborSet,
    pub visited_nodes: u64,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dataset: Arc<Dataset>,
    nodes: Vec<KdNode>,
    perm: Vec<usize>,
    leaf_size: usize,
}

#[derive(PartialEq)]
struct Pending {
    bound: f64,
    node: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Min-heap on (bound, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(dataset: Arc<Dataset>, leaf_size: usize) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if leaf_size == 0 {
            return Err(invalid("leaf size must be >= 1"));
        }
        let n = dataset.len();
        let mut tree = Self {
            nodes: Vec::with_capacity(2 * n / leaf_size + 1),
            perm: (0..n).collect(),
            leaf_size,
            dataset,
        };
        tree.build_node(0, n, 0);
        Ok(tree)
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        match axis {
            0 => self.dataset.xs()[i],
            1 => self.dataset.ys()[i],
            2 => self.dataset.zs()[i],
            _ => self.dataset.ts()[i],
        }
    }

    fn build_node(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for &i in &self.perm[start..end] {
            for axis in 0..4 {
                let v = self.coord(i, axis);
                lo[axis] = lo[axis].min(v);
                hi[axis] = hi[axis].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            lo,
            hi,
            min_t: lo[3],
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= self.leaf_size {
            return id;
        }
        let dim = SplitDim::from_depth(depth);
        let axis = dim.axis();
        let mid = start + (end - start) / 2;
        let mut perm = std::mem::take(&mut self.perm);
        perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            self.coord(a, axis).total_cmp(&self.coord(b, axis)).then(a.cmp(&b))
        });
        let value = self.coord(perm[mid], axis);
        self.perm = perm;
        let left = self.build_node(start, mid, depth + 1);
        let right = self.build_node(mid, end, depth + 1);
        self.nodes[id].kind = NodeKind::Split { dim, value, left, right };
        id
    }

    pub fn root(&self) -> &KdNode {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[KdNode] {
        &self.nodes
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    /// Number of levels (a single leaf has depth 1).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[KdNode], id: usize) -> usize {
            match nodes[id].kind {
                NodeKind::Leaf { .. } => 1,
                NodeKind::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Dataset indices stored under `node`.
    pub fn subtree_points(&self, node: usize) -> Vec<usize> {
        match self.nodes[node].kind {
            NodeKind::Leaf { start, end } => self.perm[start..end].to_vec(),
            NodeKind::Split { left, right, .. } => {
                let mut v = self.subtree_points(left);
                v.extend(self.subtree_points(right));
                v
            }
        }
    }

    /// Scaled lower bound from `q` to any valid point inside `node`'s box,
    /// `+inf` when the whole subtree is past the cutoff.
    pub fn box_lower_bound(&self, node: usize, q: &Point4, sigma: &ScaleParams, cutoff: f64) -> f64 {
        let n = &self.nodes[node];
        if n.min_t > cutoff {
            return f64::INFINITY;
        }
        let gap = |v: f64, lo: f64, hi: f64| {
            if v < lo {
                v - lo
            } else if v > hi {
                v - hi
            } else {
                0.0
            }
        };
        let dx = gap(q.x, n.lo[0], n.hi[0]);
        let dy = gap(q.y, n.lo[1], n.hi[1]);
        let dz = gap(q.z, n.lo[2], n.hi[2]);
        let dt = gap(q.t, n.lo[3], n.hi[3].min(cutoff));
        spatial_terms(dx, dy, dz, sigma) + temporal_term(dt, sigma)
    }

    pub fn query(&self, q: Point4, k: usize, sigma: &ScaleParams, mask: Mask) -> Result<KdResult> {
        if k == 0 {
            return Err(invalid("k must be >= 1"));
        }
        sigma.validate()?;
        mask.validate()?;
        let cutoff = mask.cutoff(q.t);
        let ts = self.dataset.ts();
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let mut comparisons = 0u64;
        let mut visited = 0u64;
        let mut heap = BinaryHeap::new();
        let root_bound = self.box_lower_bound(0, &q, sigma, cutoff);
        if root_bound.is_finite() {
            heap.push(Pending { bound: root_bound, node: 0 });
        }
        while let Some(Pending { bound, node }) = heap.pop() {
            if best.len() == k && bound > best[k - 1].0 {
                break;
            }
            visited += 1;
            match self.nodes[node].kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.perm[start..end] {
                        comparisons += 1;
                        if ts[i] > cutoff {
                            continue;
                        }
                        let cand = (point_distance(&q, &self.dataset, i, sigma), i);
                        insert_sorted(&mut best, cand, k);
                    }
                }
                NodeKind::Split { left, right, .. } => {
                    for child in [left, right] {
                        let b = self.box_lower_bound(child, &q, sigma, cutoff);
                        if b.is_finite() && !(best.len() == k && b > best[k - 1].0) {
                            heap.push(Pending { bound: b, node: child });
                        }
                    }
                }
            }
        }
        let (distances, indices) = best.into_iter().unzip();
        Ok(KdResult {
            neighbors: NeighborSet {
                indices,
                distances,
                comparisons,
                rounds: 0,
            },
            visited_nodes: visited,
        })
    }

    pub fn query_batch(&self, batch: &QueryBatch) -> Result<Vec<KdResult>> {
        batch.validate()?;
        (0..batch.len())
            .map(|i| self.query(batch.points[i], batch.k, &batch.sigma_for(i), batch.mask))
            .collect()
    }
}

fn insert_sorted(best: &mut Vec<(f64, usize)>, cand: (f64, usize), k: usize) {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if best.len() == k && cmp(&cand, &best[k - 1]) != Ordering::Less {
        return;
    }
    let pos = best.partition_point(|p| cmp(p, &cand) == Ordering::Less);
    best.insert(pos, cand);
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::metric::WindVector;
    use crate::search::linear_query;

    fn grid(n: usize) -> Arc<Dataset> {
        let rows = (0..n)
            .map(|i| {
                let f = i as f64;
                Record::new("g", Point4::new((f * 7.3) % 11.0, (f * 3.1) % 5.0, f % 3.0, f), WindVector::default())
            })
            .collect();
        Arc::new(Dataset::from_trajectories(vec![("g".into(), rows)]))
    }

    #[test]
    fn single_leaf() {
        let t = KdTree::build(grid(1), 16).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.depth(), 1);
        assert!(KdTree::build(Arc::new(Dataset::empty()), 16).is_err());
    }

    #[test]
    fn depth_and_annotations() {
        for (n, leaf) in [(1000, 16), (777, 5), (64, 64), (65, 8)] {
            let t = KdTree::build(grid(n), leaf).unwrap();
            let bound = ((n as f64 / leaf as f64).log2().ceil().max(0.0)) as usize + 1;
            assert!(t.depth() <= bound, "n={n} leaf={leaf} depth={} bound={bound}", t.depth());
            assert_eq!(t.root().min_t, 0.0);
            for (id, node) in t.nodes().iter().enumerate() {
                let pts = t.subtree_points(id);
                assert!(pts.iter().all(|&i| t.dataset().time(i) >= node.min_t));
                if let NodeKind::Split { dim, value, left, right } = node.kind {
                    let ax = dim.axis();
                    assert!(t.subtree_points(left).iter().all(|&i| t.coord(i, ax) <= value));
                    assert!(t.subtree_points(right).iter().all(|&i| t.coord(i, ax) >= value));
                }
            }
        }
    }

    #[test]
    fn matches_linear() {
        let ds = grid(500);
        let t = KdTree::build(Arc::clone(&ds), 4).unwrap();
        let s = ScaleParams::new(1.0, 2.0, 0.01).unwrap();
        for mask in [Mask::Unmasked, Mask::Window(0.0), Mask::Window(100.0)] {
            let qs: Vec<Point4> = (0..20).map(|i| ds.point(i * 25)).collect();
            let b = QueryBatch::new(qs, 7, s, mask);
            let lin = linear_query(&b, &ds).unwrap();
            let kd: Vec<NeighborSet> = t.query_batch(&b).unwrap().into_iter().map(|r| r.neighbors).collect();
            crate::search::compare_results(&lin, &kd, 1e-9).unwrap();
        }
    }

    #[test]
    fn self_match() {
        let ds = grid(200);
        let t = KdTree::build(Arc::clone(&ds), 16).unwrap();
        let s = ScaleParams::isotropic(1.0).unwrap();
        let r = t.query(ds.point(42), 1, &s, Mask::Window(0.0)).unwrap();
        assert_eq!(r.neighbors.indices, vec![42]);
        assert!(r.visited_nodes >= 1);
    }
}
