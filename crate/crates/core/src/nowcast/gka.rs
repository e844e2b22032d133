//! Gaussian kernel averaging over a retrieved context.
//!
//! The forecast at `x` is `sum_k w_k s_k / sum_k w_k` with
//! `w_k = exp(-|x - x_k|²_sigma)`. Exponents are shifted by their minimum
//! before exponentiation, which leaves the ratio unchanged.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{Point4, ScaleParams, WindVector};

/// A context element: where and what was measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextPoint {
    pub point: Point4,
    pub wind: WindVector,
}

impl ContextPoint {
    pub fn from_dataset(ds: &Dataset, i: usize) -> Self {
        Self {
            point: ds.point(i),
            wind: ds.wind(i),
        }
    }
}

/// Squared offsets `(dx² + dy², dz², dt²)`; the exponent is their dot
/// product with `sigma`.
#[inline]
pub fn kernel_features(q: Point4, p: Point4) -> [f64; 3] {
    let (dx, dy, dz, dt) = (q.x - p.x, q.y - p.y, q.z - p.z, q.t - p.t);
    [dx * dx + dy * dy, dz * dz, dt * dt]
}

#[inline]
fn exponent(f: &[f64; 3], s: &ScaleParams) -> f64 {
    s.sigma_xy * f[0] + s.sigma_z * f[1] + s.sigma_t * f[2]
}

/// Weighted average from raw exponents (`w_k = exp(-e_k)`).
pub fn average_from_exponents(exponents: &[f64], winds: &[WindVector]) -> Option<WindVector> {
    let min = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (e, w) in exponents.iter().zip(winds) {
        let wt = (min - e).exp();
        sw += wt;
        sx += wt * w.sx;
        sy += wt * w.sy;
    }
    Some(WindVector::new(sx / sw, sy / sw))
}

/// Kernel-weighted forecast; `None` for an empty context.
pub fn gka_predict(query: Point4, context: &[ContextPoint], sigma: &ScaleParams) -> Option<WindVector> {
    let exps: Vec<f64> = context
        .iter()
        .map(|c| exponent(&kernel_features(query, c.point), sigma))
        .collect();
    let winds: Vec<WindVector> = context.iter().map(|c| c.wind).collect();
    average_from_exponents(&exps, &winds)
}

/// One training example: a query, its observed wind and its context.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub query: Point4,
    pub target: WindVector,
    pub context: Vec<ContextPoint>,
}

/// Loss `0.5 * |s_hat - s|²` of one sample, its prediction and the
/// gradient with respect to `sigma`.
pub fn sample_loss_and_grad(sample: &Sample, sigma: &ScaleParams) -> Option<(f64, WindVector, [f64; 3])> {
    if sample.context.is_empty() {
        return None;
    }
    let feats: Vec<[f64; 3]> = sample
        .context
        .iter()
        .map(|c| kernel_features(sample.query, c.point))
        .collect();
    let exps: Vec<f64> = feats.iter().map(|f| exponent(f, sigma)).collect();
    let min = exps.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = exps.iter().map(|e| (min - e).exp()).collect();
    let sw: f64 = w.iter().sum();
    let mut pred = WindVector::default();
    for (wk, c) in w.iter().zip(&sample.context) {
        pred.sx += wk * c.wind.sx;
        pred.sy += wk * c.wind.sy;
    }
    pred.sx /= sw;
    pred.sy /= sw;

    // d s_hat / d sigma_j = -sum_k p_k f_kj (s_k - s_hat)
    let mut ds_x = [0.0; 3];
    let mut ds_y = [0.0; 3];
    for ((wk, f), c) in w.iter().zip(&feats).zip(&sample.context) {
        let p = wk / sw;
        let (rx, ry) = (c.wind.sx - pred.sx, c.wind.sy - pred.sy);
        for j in 0..3 {
            ds_x[j] -= p * f[j] * rx;
            ds_y[j] -= p * f[j] * ry;
        }
    }
    let (ex, ey) = (pred.sx - sample.target.sx, pred.sy - sample.target.sy);
    let loss = 0.5 * (ex * ex + ey * ey);
    let grad = [0, 1, 2].map(|j| ex * ds_x[j] + ey * ds_y[j]);
    Some((loss, pred, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    /// Mean squared error over both wind components.
    pub loss: f64,
    /// d loss / d (sigma_xy, sigma_z, sigma_t).
    pub grad: [f64; 3],
    pub used: usize,
    /// Samples without context, excluded from loss and gradient.
    pub skipped: usize,
}

/// Batch loss with a single global `sigma`.
pub fn gka_loss_and_grad(samples: &[Sample], sigma: &ScaleParams) -> Result<LossGrad> {
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    let mut used = 0;
    for s in samples {
        if let Some((l, _, g)) = sample_loss_and_grad(s, sigma) {
            loss += l;
            for j in 0..3 {
                grad[j] += g[j];
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoContext);
    }
    let n = used as f64;
    Ok(LossGrad {
        loss: loss / n,
        grad: grad.map(|g| g / n),
        used,
        skipped: samples.len() - used,
    })
}
