#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnn::{Dataset, Point4, Record, WindVector};

/// Random-walk trajectories. With `grid` set, coordinates and times are
/// rounded to integers so exact distance ties are common.
pub fn random_trajectories(seed: u64, n_traj: usize, max_len: usize, grid: bool) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let round = |v: f64| if grid { v.round() } else { v };
    let groups = (0..n_traj)
        .map(|j| {
            let len = rng.random_range(1..=max_len);
            let mut p = [
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(0.0..10.0),
            ];
            let mut v = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-0.2..0.2)];
            let mut t: f64 = rng.random_range(0.0..40.0);
            let rows = (0..len)
                .map(|_| {
                    for d in 0..3 {
                        v[d] = 0.9 * v[d] + rng.random_range(-0.5..0.5);
                        p[d] += v[d];
                    }
                    // occasional repeated timestamps
                    if rng.random_bool(0.9) {
                        t += rng.random_range(0.5..2.0);
                    }
                    let wind = WindVector::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
                    Record::new(
                        format!("tr{j}"),
                        Point4::new(round(p[0]), round(p[1]), round(p[2]), round(t)),
                        wind,
                    )
                })
                .collect();
            (format!("tr{j:03}"), rows)
        })
        .collect();
    Dataset::from_trajectories(groups)
}

/// Query points: half copies of stored points, half random points.
pub fn random_queries(ds: &Dataset, seed: u64, count: usize) -> Vec<Point4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let (t0, t1) = ds.time_range().unwrap();
    (0..count)
        .map(|_| {
            if rng.random_bool(0.5) {
                ds.point(rng.random_range(0..ds.len()))
            } else {
                Point4::new(
                    rng.random_range(-80.0..80.0),
                    rng.random_range(-80.0..80.0),
                    rng.random_range(-5.0..15.0),
                    rng.random_range(t0 - 5.0..t1 + 5.0),
                )
            }
        })
        .collect()
}

pub fn arc(ds: Dataset) -> Arc<Dataset> {
    Arc::new(ds)
}

use tnn::nowcast::{sample_loss_and_grad, gka_loss_and_grad, ContextPoint, Sample, SigmaNet};
use tnn::ScaleParams;

/// A batch in unit-scale coordinates: contexts in `[-1, 1]^3 x [-1, 0]`,
/// queries at `t = 0.5`, winds of a few knots.
pub fn unit_batch(rng: &mut ChaCha8Rng, samples: usize, max_context: usize) -> Vec<Sample> {
    (0..samples)
        .map(|_| {
            let n = rng.random_range(1..=max_context);
            let context = (0..n)
                .map(|_| ContextPoint {
                    point: Point4::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..0.0),
                    ),
                    wind: WindVector::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                })
                .collect();
            Sample {
                query: Point4::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    0.5,
                ),
                target: WindVector::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                context,
            }
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` with the floor tied to the gradient's
/// overall size, so components that are numerically zero compare
/// absolutely.
pub fn rel_err(a: f64, b: f64, gmax: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * (1.0 + gmax))
}

/// Largest relative error between the analytic global-sigma gradient and
/// central differences.
pub fn global_grad_error(samples: &[Sample], sigma: ScaleParams) -> f64 {
    let g = gka_loss_and_grad(samples, &sigma).unwrap().grad;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = sigma.as_array();
    (0..3)
        .map(|j| {
            let h = 1e-5 * s[j];
            let at = |v: f64| {
                let mut a = s;
                a[j] = v;
                gka_loss_and_grad(samples, &ScaleParams::from_array(a).unwrap()).unwrap().loss
            };
            let fd = (at(s[j] + h) - at(s[j] - h)) / (2.0 * h);
            rel_err(g[j], fd, gmax)
        })
        .fold(0.0, f64::max)
}

fn net_loss(net: &SigmaNet, samples: &[Sample]) -> f64 {
    let ls: Vec<f64> = samples
        .iter()
        .filter_map(|s| sample_loss_and_grad(s, &net.forward(s.query.spatial())).map(|r| r.0))
        .collect();
    ls.iter().sum::<f64>() / ls.len() as f64
}

/// Largest relative error over every network weight.
pub fn net_grad_error(net: &SigmaNet, samples: &[Sample]) -> f64 {
    let mut grad = vec![0.0; net.params.len()];
    let mut used = 0usize;
    for s in samples {
        let (sigma, trace) = net.forward_traced(s.query.spatial());
        if let Some((_, _, g)) = sample_loss_and_grad(s, &sigma) {
            net.backward(&trace, g, &mut grad);
            used += 1;
        }
    }
    grad.iter_mut().for_each(|g| *g /= used as f64);
    let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..grad.len() {
        let p = net.params[i];
        let h = 1e-4 * (1.0 + p.abs());
        probe.params[i] = p + h;
        let up = net_loss(&probe, samples);
        probe.params[i] = p - h;
        let down = net_loss(&probe, samples);
        probe.params[i] = p;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h), gmax));
    }
    worst
}
