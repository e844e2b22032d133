//! Timed, oracle-checked query benchmarks and the (K, F) sweep.
//!
//! Queries are dataset points drawn without replacement; each query's own
//! timestamp sets its mask. Every configuration is cross-checked against
//! the exhaustive scan before a row is produced, and a mismatch is an error.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::index::TrajectoryIndex;
use crate::kdtree::{KdTree, DEFAULT_LEAF_SIZE};
use crate::metric::{Mask, ScaleParams};
use crate::search::{
    compare_results, linear_query_with, tnn_query_with, NeighborSet, QueryBatch, SearchOptions, DEFAULT_FETCH,
    DEFAULT_POINTS_PER_SEGMENT,
};

/// Distances must agree with the oracle to this relative tolerance.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Linear,
    Tnn,
    KdTree,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Linear => "linear",
            Method::Tnn => "tnn",
            Method::KdTree => "kdtree",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Method::Linear),
            "tnn" => Ok(Method::Tnn),
            "kdtree" => Ok(Method::KdTree),
            _ => Err(invalid(format!("unknown method `{s}` (linear, tnn, kdtree)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub method: Method,
    pub k: usize,
    pub points_per_segment: usize,
    pub fetch: usize,
    pub leaf_size: usize,
    /// `None` disables masking.
    pub window: Option<f64>,
    pub sigma: ScaleParams,
    pub queries: usize,
    pub seed: u64,
    pub warmup: usize,
    pub repeats: usize,
    /// Queries cross-checked against the exhaustive scan.
    pub verify: usize,
    pub options: SearchOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            method: Method::Tnn,
            k: 1000,
            points_per_segment: DEFAULT_POINTS_PER_SEGMENT,
            fetch: DEFAULT_FETCH,
            leaf_size: DEFAULT_LEAF_SIZE,
            window: Some(0.0),
            sigma: ScaleParams {
                sigma_xy: 1.0,
                sigma_z: 1.0,
                sigma_t: 1.0,
            },
            queries: 100,
            seed: 0,
            warmup: 1,
            repeats: 5,
            verify: 100,
            options: SearchOptions::sequential(),
        }
    }
}

impl BenchConfig {
    fn mask(&self) -> Mask {
        self.window.map_or(Mask::Unmasked, Mask::Window)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.queries == 0 || self.repeats == 0 {
            return Err(invalid("k, queries and repeats must be >= 1"));
        }
        if self.points_per_segment == 0 || self.fetch == 0 || self.leaf_size == 0 {
            return Err(invalid("K, F and leaf size must be >= 1"));
        }
        self.sigma.validate()?;
        self.mask().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub method: Method,
    pub points_per_segment: usize,
    pub fetch: usize,
    pub k: usize,
    pub window: Option<f64>,
    pub queries: usize,
    pub mean_comparisons: f64,
    /// KD-tree only.
    pub mean_visited_nodes: f64,
    pub build_seconds: f64,
    pub mean_latency_seconds: f64,
    pub median_total_seconds: f64,
    pub mean_total_seconds: f64,
    pub exactness_verified: bool,
}

pub const BENCH_HEADER: [&str; 14] = [
    "dataset",
    "method",
    "K",
    "F",
    "k",
    "t_w",
    "queries",
    "mean_comparisons",
    "mean_visited_nodes",
    "build_s",
    "mean_latency_s",
    "median_total_s",
    "mean_total_s",
    "exactness_verified",
];

/// `count` distinct point indices, sorted, or all of them if there are fewer.
pub fn sample_queries(n: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = rand::seq::index::sample(&mut rng, n, count).into_vec();
    v.sort_unstable();
    v
}

enum Engine {
    Linear,
    Tnn(TrajectoryIndex),
    KdTree(KdTree),
}

impl Engine {
    fn build(ds: &Arc<Dataset>, cfg: &BenchConfig) -> Result<Self> {
        Ok(match cfg.method {
            Method::Linear => Engine::Linear,
            Method::Tnn => Engine::Tnn(TrajectoryIndex::build(ds.clone(), cfg.points_per_segment)?),
            Method::KdTree => Engine::KdTree(KdTree::build(ds.clone(), cfg.leaf_size)?),
        })
    }

    /// Results and total visited KD-tree nodes.
    fn run(&self, ds: &Dataset, batch: &QueryBatch, opts: &SearchOptions) -> Result<(Vec<NeighborSet>, u64)> {
        match self {
            Engine::Linear => Ok((linear_query_with(batch, ds, opts)?, 0)),
            Engine::Tnn(index) => Ok((tnn_query_with(batch, index, opts)?, 0)),
            Engine::KdTree(tree) => {
                batch.validate()?;
                let one = |i: usize| tree.query(batch.points[i], batch.k, &batch.sigma_for(i), batch.mask);
                let res: Vec<_> = if opts.parallel {
                    (0..batch.len()).into_par_iter().map(one).collect::<Result<_>>()?
                } else {
                    (0..batch.len()).map(one).collect::<Result<_>>()?
                };
                let visited = res.iter().map(|r| r.visited_nodes).sum();
                Ok((res.into_iter().map(|r| r.neighbors).collect(), visited))
            }
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `f` `warmup` times untimed, then `repeats` times timed; returns the
/// first timed output with the median and mean wall-clock seconds.
fn timed<T>(warmup: usize, repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64, f64)> {
    for _ in 0..warmup {
        f()?;
    }
    let mut first = None;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        first.get_or_insert(out);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    Ok((first.expect("repeats >= 1"), median(&mut times), mean))
}

fn verify(expected: &[NeighborSet], actual: &[NeighborSet], what: &str) -> Result<()> {
    compare_results(expected, actual, VERIFY_TOLERANCE).map_err(|e| Error::Verification(format!("{what}: {e}")))
}

fn make_batch(ds: &Dataset, idx: &[usize], cfg: &BenchConfig) -> QueryBatch {
    QueryBatch::new(idx.iter().map(|&i| ds.point(i)).collect(), cfg.k, cfg.sigma, cfg.mask()).with_fetch(cfg.fetch)
}

pub fn run_bench(name: &str, ds: Arc<Dataset>, cfg: &BenchConfig) -> Result<BenchRow> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let engine = Engine::build(&ds, cfg)?;
    let build_seconds = start.elapsed().as_secs_f64();

    let idx = sample_queries(ds.len(), cfg.queries, cfg.seed);
    let batch = make_batch(&ds, &idx, cfg);
    let ((results, visited), median_total, mean_total) =
        timed(cfg.warmup, cfg.repeats, || engine.run(&ds, &batch, &cfg.options))?;

    let n_check = cfg.verify.min(idx.len());
    let check = make_batch(&ds, &idx[..n_check], cfg);
    let oracle = linear_query_with(&check, &ds, &cfg.options)?;
    verify(&oracle, &results[..n_check], &format!("{name}/{}", cfg.method))?;

    let nq = idx.len() as f64;
    Ok(BenchRow {
        dataset: name.to_string(),
        method: cfg.method,
        points_per_segment: cfg.points_per_segment,
        fetch: cfg.fetch,
        k: cfg.k,
        window: cfg.window,
        queries: idx.len(),
        mean_comparisons: results.iter().map(|r| r.comparisons as f64).sum::<f64>() / nq,
        mean_visited_nodes: visited as f64 / nq,
        build_seconds,
        mean_latency_seconds: median_total / nq,
        median_total_seconds: median_total,
        mean_total_seconds: mean_total,
        exactness_verified: true,
    })
}

fn window_field(w: Option<f64>) -> String {
    w.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BENCH_HEADER)?;
    for r in rows {
        let (kk, ff) = match r.method {
            Method::Tnn => (r.points_per_segment.to_string(), r.fetch.to_string()),
            _ => (String::new(), String::new()),
        };
        out.write_record([
            r.dataset.clone(),
            r.method.to_string(),
            kk,
            ff,
            r.k.to_string(),
            window_field(r.window),
            r.queries.to_string(),
            r.mean_comparisons.to_string(),
            r.mean_visited_nodes.to_string(),
            r.build_seconds.to_string(),
            r.mean_latency_seconds.to_string(),
            r.median_total_seconds.to_string(),
            r.mean_total_seconds.to_string(),
            r.exactness_verified.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub points_per_segment: Vec<usize>,
    pub fetch: Vec<usize>,
    /// Method, K and F of `base` are ignored.
    pub base: BenchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub points_per_segment: usize,
    pub fetch: usize,
    pub k: usize,
    pub window: Option<f64>,
    pub queries: usize,
    pub mean_comparisons: f64,
    /// Mean comparisons as a percentage of the dataset size.
    pub comparison_pct: f64,
    pub tnn_median_seconds: f64,
    pub linear_median_seconds: f64,
    /// Linear time over TNN time on the same queries.
    pub speedup: f64,
    pub exactness_verified: bool,
}

pub const SWEEP_HEADER: [&str; 12] = [
    "dataset",
    "K",
    "F",
    "k",
    "t_w",
    "queries",
    "mean_comparisons",
    "comparison_pct",
    "tnn_median_s",
    "linear_median_s",
    "speedup",
    "exactness_verified",
];

/// Full grid over `K x F`. The linear scan is timed once and its results
/// check every query of every cell.
pub fn run_sweep(name: &str, ds: Arc<Dataset>, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.points_per_segment.is_empty() || cfg.fetch.is_empty() {
        return Err(invalid("K and F lists must be non-empty"));
    }
    cfg.base.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let base = &cfg.base;
    let idx = sample_queries(ds.len(), base.queries, base.seed);
    let batch = make_batch(&ds, &idx, base);
    let (oracle, linear_median, _) =
        timed(base.warmup, base.repeats, || linear_query_with(&batch, &ds, &base.options))?;

    let mut rows = Vec::with_capacity(cfg.points_per_segment.len() * cfg.fetch.len());
    for &kk in &cfg.points_per_segment {
        if kk == 0 {
            return Err(invalid("K must be >= 1"));
        }
        let index = TrajectoryIndex::build(ds.clone(), kk)?;
        for &ff in &cfg.fetch {
            if ff == 0 {
                return Err(invalid("F must be >= 1"));
            }
            let b = batch.clone().with_fetch(ff);
            let (res, tnn_median, _) = timed(base.warmup, base.repeats, || tnn_query_with(&b, &index, &base.options))?;
            verify(&oracle, &res, &format!("{name}/tnn K={kk} F={ff}"))?;
            let mean_comparisons = res.iter().map(|r| r.comparisons as f64).sum::<f64>() / idx.len() as f64;
            rows.push(SweepRow {
                dataset: name.to_string(),
                points_per_segment: kk,
                fetch: ff,
                k: base.k,
                window: base.window,
                queries: idx.len(),
                mean_comparisons,
                comparison_pct: 100.0 * mean_comparisons / ds.len() as f64,
                tnn_median_seconds: tnn_median,
                linear_median_seconds: linear_median,
                speedup: linear_median / tnn_median,
                exactness_verified: true,
            });
        }
    }
    Ok(rows)
}

/// The row with the highest speedup.
pub fn best_cell(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().max_by(|a, b| a.speedup.total_cmp(&b.speedup))
}

/// Whether `(K, F)` sits at a corner of the grid spanned by `rows`.
pub fn is_corner(rows: &[SweepRow], row: &SweepRow) -> bool {
    let ks = rows.iter().map(|r| r.points_per_segment);
    let fs = rows.iter().map(|r| r.fetch);
    let (kmin, kmax) = (ks.clone().min(), ks.max());
    let (fmin, fmax) = (fs.clone().min(), fs.max());
    let k_edge = Some(row.points_per_segment) == kmin || Some(row.points_per_segment) == kmax;
    let f_edge = Some(row.fetch) == fmin || Some(row.fetch) == fmax;
    k_edge && f_edge
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            r.dataset.clone(),
            r.points_per_segment.to_string(),
            r.fetch.to_string(),
            r.k.to_string(),
            window_field(r.window),
            r.queries.to_string(),
            r.mean_comparisons.to_string(),
            r.comparison_pct.to_string(),
            r.tnn_median_seconds.to_string(),
            r.linear_median_seconds.to_string(),
            r.speedup.to_string(),
            r.exactness_verified.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
