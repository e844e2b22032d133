//! Fitting kernel scale parameters.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::metric::{Point4, ScaleParams};
use crate::nowcast::forecast::{evaluate_rmse, ContextSource, Forecaster, GkaForecaster, GkaModel, KnnBaseline};
use crate::nowcast::gka::{sample_loss_and_grad, Sample};
use crate::nowcast::sigmanet::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Queries per optimizer step (`M`).
    pub batch_size: usize,
    /// Context size.
    pub k: usize,
    pub window: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 256,
            k: 100,
            window: 1800.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.k == 0 {
            return Err(invalid("epochs, batch size and k must be >= 1"));
        }
        if !(self.window.is_finite() && self.window >= 0.0) {
            return Err(invalid(format!("window must be finite and >= 0, got {}", self.window)));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub loss: f64,
    pub duration: Duration,
    pub samples: usize,
    /// Queries without context.
    pub skipped: usize,
}

/// Mini-batch Adam on the kernel loss. Contexts are re-retrieved with the
/// current sigma before every step. A global sigma is optimized in log
/// space; a network is optimized on its raw weights.
pub fn train(
    source: &ContextSource<'_>,
    train_set: &[usize],
    model: GkaModel,
    cfg: &TrainConfig,
) -> Result<(GkaModel, Vec<EpochStats>)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let ds = source.dataset();
    let mut model = model;
    let n_params = match &model {
        GkaModel::Global(_) => 3,
        GkaModel::Net(n) => n.params.len(),
    };
    let mut opt = Adam::new(cfg.adam, n_params);
    let mut order = train_set.to_vec();
    let mut stats = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0usize, 0usize);

        for batch in order.chunks(cfg.batch_size) {
            let points: Vec<Point4> = batch.iter().map(|&i| ds.point(i)).collect();
            let sigmas = model.sigmas(&points);
            let contexts = source.contexts(&points, &sigmas, cfg.k, cfg.window)?;
            let mut grad = vec![0.0; n_params];
            let mut batch_used = 0usize;
            for (j, (&i, context)) in batch.iter().zip(contexts).enumerate() {
                let sample = Sample {
                    query: points[j],
                    target: ds.wind(i),
                    context,
                };
                let sigma = sigmas[if sigmas.len() == 1 { 0 } else { j }];
                let Some((l, _, g)) = sample_loss_and_grad(&sample, &sigma) else {
                    skipped += 1;
                    continue;
                };
                loss_sum += l;
                batch_used += 1;
                match &model {
                    // d/d ln(sigma) = sigma * d/d sigma
                    GkaModel::Global(s) => {
                        let sa = s.as_array();
                        for d in 0..3 {
                            grad[d] += sa[d] * g[d];
                        }
                    }
                    GkaModel::Net(net) => {
                        let (_, trace) = net.forward_traced(points[j].spatial());
                        net.backward(&trace, g, &mut grad);
                    }
                }
            }
            if batch_used == 0 {
                continue;
            }
            used += batch_used;
            grad.iter_mut().for_each(|g| *g /= batch_used as f64);
            match &mut model {
                GkaModel::Global(s) => {
                    let delta = opt.delta(&grad);
                    let a = s.as_array();
                    *s = ScaleParams::from_array([0, 1, 2].map(|d| a[d] * (-delta[d]).exp()))?;
                }
                GkaModel::Net(net) => opt.step(&mut net.params, &grad),
            }
        }
        stats.push(EpochStats {
            epoch,
            loss: if used > 0 { loss_sum / used as f64 } else { f64::NAN },
            duration: start.elapsed(),
            samples: used,
            skipped,
        });
    }
    Ok((model, stats))
}

/// Candidate multipliers for [`tune_global_sigma`]: powers of ten.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Coarse exponents tried for each component.
    pub coarse: Vec<f64>,
    /// Offsets around the best coarse exponent.
    pub fine: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            coarse: (-4..=4).map(|i| i as f64 * 0.5).collect(),
            fine: vec![-0.375, -0.25, -0.125, 0.125, 0.25, 0.375],
        }
    }
}

/// Coordinate-wise coarse-to-fine search of `base * 10^e` on validation
/// RMSE. Returns the best sigma and its RMSE.
pub fn tune_global_sigma(
    source: &ContextSource<'_>,
    base: ScaleParams,
    k: usize,
    window: f64,
    validation: &[usize],
    grid: &GridConfig,
) -> Result<(ScaleParams, f64)> {
    let ds = source.dataset();
    let score = |exps: [f64; 3]| -> Result<f64> {
        let b = base.as_array();
        let sigma = ScaleParams::from_array([0, 1, 2].map(|d| b[d] * 10f64.powf(exps[d])))?;
        let f = GkaForecaster {
            model: GkaModel::Global(sigma),
            source: *source,
            k,
            window,
        };
        Ok(evaluate_rmse(&f, ds, validation)?.rmse)
    };
    let mut best = [0.0; 3];
    let mut best_score = score(best)?;
    for (relative, offsets) in [(false, &grid.coarse), (true, &grid.fine)] {
        for d in 0..3 {
            let centre = best[d];
            for &o in offsets.iter() {
                let mut e = best;
                e[d] = if relative { centre + o } else { o };
                if e == best {
                    continue;
                }
                let s = score(e)?;
                if s < best_score {
                    best_score = s;
                    best = e;
                }
            }
        }
    }
    let b = base.as_array();
    Ok((ScaleParams::from_array([0, 1, 2].map(|d| b[d] * 10f64.powf(best[d])))?, best_score))
}

/// Picks the k-NN baseline size with the lowest validation RMSE.
pub fn tune_knn_k(
    source: &ContextSource<'_>,
    sigma: ScaleParams,
    window: f64,
    candidates: &[usize],
    validation: &[usize],
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &k in candidates {
        let f = KnnBaseline {
            source: *source,
            k,
            sigma,
            window,
        };
        let r = evaluate_rmse(&f as &dyn Forecaster, source.dataset(), validation)?.rmse;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((k, r));
        }
    }
    best.ok_or_else(|| invalid("no candidate values of k"))
}
