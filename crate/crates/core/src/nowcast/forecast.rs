//! Forecasters and their evaluation.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::index::TrajectoryIndex;
use crate::metric::{Mask, Point4, ScaleParams, WindVector};
use crate::nowcast::gka::{gka_predict, ContextPoint};
use crate::nowcast::sigmanet::SigmaNet;
use crate::search::{linear_query_with, tnn_query_with, NeighborSet, QueryBatch, SearchOptions, DEFAULT_FETCH};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Hour-average window `[t - 5400, t - 1800]`.
pub const HOUR_WINDOW: (f64, f64) = (5400.0, 1800.0);
pub const DEFAULT_WINDOW: f64 = 1800.0;
pub const DEFAULT_CONTEXT_K: usize = 100;

/// How contexts are fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retrieval {
    Tnn { fetch: usize },
    Linear,
}

impl Default for Retrieval {
    fn default() -> Self {
        Retrieval::Tnn { fetch: DEFAULT_FETCH }
    }
}

/// Neighbor retrieval over an indexed dataset.
#[derive(Debug, Clone, Copy)]
pub struct ContextSource<'a> {
    pub index: &'a TrajectoryIndex,
    pub retrieval: Retrieval,
    pub options: SearchOptions,
}

impl<'a> ContextSource<'a> {
    pub fn tnn(index: &'a TrajectoryIndex) -> Self {
        Self {
            index,
            retrieval: Retrieval::default(),
            options: SearchOptions::default(),
        }
    }

    pub fn linear(index: &'a TrajectoryIndex) -> Self {
        Self {
            index,
            retrieval: Retrieval::Linear,
            options: SearchOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SearchOptions) -> Self {
        self.options = options;
        self
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.index.dataset()
    }

    /// k masked neighbors of each point; `sigmas` holds one entry for a
    /// shared sigma or one per point.
    pub fn neighbors(&self, points: &[Point4], sigmas: &[ScaleParams], k: usize, window: f64) -> Result<Vec<NeighborSet>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let mut batch = QueryBatch::new(points.to_vec(), k, sigmas[0], Mask::Window(window));
        if sigmas.len() > 1 {
            batch = batch.with_per_query_sigma(sigmas.to_vec());
        }
        match self.retrieval {
            Retrieval::Tnn { fetch } => tnn_query_with(&batch.with_fetch(fetch), self.index, &self.options),
            Retrieval::Linear => linear_query_with(&batch, self.dataset(), &self.options),
        }
    }

    pub fn contexts(&self, points: &[Point4], sigmas: &[ScaleParams], k: usize, window: f64) -> Result<Vec<Vec<ContextPoint>>> {
        let ds = self.dataset();
        Ok(self
            .neighbors(points, sigmas, k, window)?
            .into_iter()
            .map(|n| n.indices.iter().map(|&i| ContextPoint::from_dataset(ds, i)).collect())
            .collect())
    }
}

/// Scale parameters of a kernel model.
#[derive(Debug, Clone, PartialEq)]
pub enum GkaModel {
    Global(ScaleParams),
    Net(SigmaNet),
}

impl GkaModel {
    pub fn sigma_at(&self, p: Point4) -> ScaleParams {
        match self {
            GkaModel::Global(s) => *s,
            GkaModel::Net(n) => n.forward(p.spatial()),
        }
    }

    /// One shared sigma for a global model, one per point otherwise.
    pub fn sigmas(&self, points: &[Point4]) -> Vec<ScaleParams> {
        match self {
            GkaModel::Global(s) => vec![*s],
            GkaModel::Net(_) => points.iter().map(|&p| self.sigma_at(p)).collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GkaModel::Global(_) => "gka",
            GkaModel::Net(_) => "gka-mlp",
        }
    }
}

pub trait Forecaster {
    fn name(&self) -> String;
    /// `None` where the model has nothing to average.
    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>>;
}

pub struct GkaForecaster<'a> {
    pub model: GkaModel,
    pub source: ContextSource<'a>,
    pub k: usize,
    pub window: f64,
}

impl Forecaster for GkaForecaster<'_> {
    fn name(&self) -> String {
        let r = match self.source.retrieval {
            Retrieval::Tnn { .. } => "tnn",
            Retrieval::Linear => "linear",
        };
        format!("{}-{r}", self.model.name())
    }

    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>> {
        let sigmas = self.model.sigmas(points);
        let ctx = self.source.contexts(points, &sigmas, self.k, self.window)?;
        Ok(points
            .iter()
            .zip(&ctx)
            .enumerate()
            .map(|(i, (&p, c))| gka_predict(p, c, &sigmas[if sigmas.len() == 1 { 0 } else { i }]))
            .collect())
    }
}

/// Mean wind of the calendar day (UTC, `floor(t / 86400)`), over all
/// measurements of that day including later ones.
#[derive(Debug, Clone)]
pub struct DayAverage {
    days: HashMap<i64, WindVector>,
}

fn day_of(t: f64) -> i64 {
    (t / SECONDS_PER_DAY).floor() as i64
}

impl DayAverage {
    pub fn fit(ds: &Dataset) -> Self {
        let mut acc: HashMap<i64, (f64, f64, usize)> = HashMap::new();
        for i in 0..ds.len() {
            let e = acc.entry(day_of(ds.time(i))).or_default();
            let w = ds.wind(i);
            e.0 += w.sx;
            e.1 += w.sy;
            e.2 += 1;
        }
        let days = acc
            .into_iter()
            .map(|(d, (x, y, n))| (d, WindVector::new(x / n as f64, y / n as f64)))
            .collect();
        Self { days }
    }

    pub fn predict_at(&self, t: f64) -> Option<WindVector> {
        self.days.get(&day_of(t)).copied()
    }
}

impl Forecaster for DayAverage {
    fn name(&self) -> String {
        "day-average".into()
    }

    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>> {
        Ok(points.iter().map(|p| self.predict_at(p.t)).collect())
    }
}

/// Mean wind over measurements with `t - 5400 <= t_i <= t - 1800`.
#[derive(Debug, Clone)]
pub struct HourAverage {
    times: Vec<f64>,
    // prefix[i] = sum of the first i winds in time order
    prefix_x: Vec<f64>,
    prefix_y: Vec<f64>,
}

impl HourAverage {
    pub fn fit(ds: &Dataset) -> Self {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by(|&a, &b| ds.time(a).total_cmp(&ds.time(b)).then(a.cmp(&b)));
        let mut prefix_x = Vec::with_capacity(order.len() + 1);
        let mut prefix_y = Vec::with_capacity(order.len() + 1);
        let (mut sx, mut sy) = (0.0, 0.0);
        prefix_x.push(0.0);
        prefix_y.push(0.0);
        for &i in &order {
            let w = ds.wind(i);
            sx += w.sx;
            sy += w.sy;
            prefix_x.push(sx);
            prefix_y.push(sy);
        }
        Self {
            times: order.iter().map(|&i| ds.time(i)).collect(),
            prefix_x,
            prefix_y,
        }
    }

    pub fn predict_at(&self, t: f64) -> Option<WindVector> {
        let lo = self.times.partition_point(|&s| s < t - HOUR_WINDOW.0);
        let hi = self.times.partition_point(|&s| s <= t - HOUR_WINDOW.1);
        if hi <= lo {
            return None;
        }
        let n = (hi - lo) as f64;
        Some(WindVector::new(
            (self.prefix_x[hi] - self.prefix_x[lo]) / n,
            (self.prefix_y[hi] - self.prefix_y[lo]) / n,
        ))
    }
}

impl Forecaster for HourAverage {
    fn name(&self) -> String {
        "hour-average".into()
    }

    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>> {
        Ok(points.iter().map(|p| self.predict_at(p.t)).collect())
    }
}

fn mean_wind(ds: &Dataset, indices: &[usize]) -> Option<WindVector> {
    if indices.is_empty() {
        return None;
    }
    let n = indices.len() as f64;
    let (sx, sy) = indices.iter().fold((0.0, 0.0), |(x, y), &i| {
        let w = ds.wind(i);
        (x + w.sx, y + w.sy)
    });
    Some(WindVector::new(sx / n, sy / n))
}

/// Unweighted mean of the k masked nearest neighbors.
pub struct KnnBaseline<'a> {
    pub source: ContextSource<'a>,
    pub k: usize,
    pub sigma: ScaleParams,
    pub window: f64,
}

impl Forecaster for KnnBaseline<'_> {
    fn name(&self) -> String {
        format!("knn-{}", self.k)
    }

    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>> {
        let ds = self.source.dataset();
        Ok(self
            .source
            .neighbors(points, &[self.sigma], self.k, self.window)?
            .iter()
            .map(|n| mean_wind(ds, &n.indices))
            .collect())
    }
}

/// Wind of the single nearest masked measurement, found by exhaustive scan.
pub struct Persistence<'a> {
    pub dataset: &'a Dataset,
    pub sigma: ScaleParams,
    pub window: f64,
    pub options: SearchOptions,
}

impl Forecaster for Persistence<'_> {
    fn name(&self) -> String {
        "persistence".into()
    }

    fn predict(&self, points: &[Point4]) -> Result<Vec<Option<WindVector>>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let batch = QueryBatch::new(points.to_vec(), 1, self.sigma, Mask::Window(self.window));
        Ok(linear_query_with(&batch, self.dataset, &self.options)?
            .iter()
            .map(|n| n.indices.first().map(|&i| self.dataset.wind(i)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub rmse: f64,
    pub evaluated: usize,
    pub no_context: usize,
    pub duration: Duration,
}

/// `sqrt(sum (dx² + dy²) / (2 n))`.
pub fn rmse(pairs: &[(WindVector, WindVector)]) -> f64 {
    let s: f64 = pairs
        .iter()
        .map(|(p, t)| {
            let (dx, dy) = (p.sx - t.sx, p.sy - t.sy);
            dx * dx + dy * dy
        })
        .sum();
    (s / (2.0 * pairs.len() as f64)).sqrt()
}

/// RMSE of `model` on dataset points `test`, in chunks of `chunk` queries.
/// Points without a forecast are excluded and counted.
pub fn evaluate_rmse_chunked(model: &dyn Forecaster, ds: &Dataset, test: &[usize], chunk: usize) -> Result<RmseReport> {
    let start = Instant::now();
    let mut pairs = Vec::with_capacity(test.len());
    let mut no_context = 0;
    for part in test.chunks(chunk.max(1)) {
        let points: Vec<Point4> = part.iter().map(|&i| ds.point(i)).collect();
        for (pred, &i) in model.predict(&points)?.into_iter().zip(part) {
            match pred {
                Some(p) => pairs.push((p, ds.wind(i))),
                None => no_context += 1,
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoContext);
    }
    Ok(RmseReport {
        rmse: rmse(&pairs),
        evaluated: pairs.len(),
        no_context,
        duration: start.elapsed(),
    })
}

pub fn evaluate_rmse(model: &dyn Forecaster, ds: &Dataset, test: &[usize]) -> Result<RmseReport> {
    evaluate_rmse_chunked(model, ds, test, 4096)
}
