//! Synthetic datasets: smoothed random walks and structure-free random points.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::config::KeyValues;
use crate::dataset::{Dataset, Record};
use crate::error::{invalid, Result};
use crate::metric::{Point4, WindVector};

/// Smooth ground-truth wind: a mean flow, a spatially uniform drift over
/// time and a few travelling sinusoidal modes.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    pub mean: WindVector,
    pub drift_amplitude: f64,
    pub drift_period: f64,
    pub modes: Vec<WindMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindMode {
    pub amplitude: WindVector,
    /// Wave vector (rad/m).
    pub wave: [f64; 3],
    /// rad/s
    pub omega: f64,
    pub phase: f64,
}

impl WindField {
    pub fn random(seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5749_4e44);
        let modes = (0..4)
            .map(|_| {
                let horiz = TAU / rng.random_range(150e3..600e3);
                let dir = rng.random_range(0.0..TAU);
                WindMode {
                    amplitude: WindVector::new(
                        amplitude * rng.random_range(-1.0..1.0),
                        amplitude * rng.random_range(-1.0..1.0),
                    ),
                    wave: [
                        horiz * dir.cos(),
                        horiz * dir.sin(),
                        TAU / rng.random_range(5e3..20e3),
                    ],
                    omega: TAU / rng.random_range(6.0 * 3600.0..24.0 * 3600.0),
                    phase: rng.random_range(0.0..TAU),
                }
            })
            .collect();
        Self {
            mean: WindVector::new(30.0, 5.0),
            drift_amplitude: amplitude,
            drift_period: 24.0 * 3600.0,
            modes,
        }
    }

    /// Constant wind everywhere.
    pub fn constant(w: WindVector) -> Self {
        Self {
            mean: w,
            drift_amplitude: 0.0,
            drift_period: 1.0,
            modes: Vec::new(),
        }
    }

    pub fn eval(&self, p: Point4) -> WindVector {
        let drift = self.drift_amplitude * (TAU * p.t / self.drift_period).sin();
        let mut w = WindVector::new(self.mean.sx + drift, self.mean.sy + 0.5 * drift);
        for m in &self.modes {
            let arg = m.wave[0] * p.x + m.wave[1] * p.y + m.wave[2] * p.z + m.omega * p.t + m.phase;
            let s = arg.sin();
            w.sx += m.amplitude.sx * s;
            w.sy += m.amplitude.sy * s;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrwConfig {
    pub n_traj: usize,
    pub len: usize,
    /// Sampling interval (s).
    pub dt: f64,
    pub momentum: f64,
    /// Velocity innovation scale (m/s per step).
    pub noise: f64,
    /// Initial velocity scale (m/s).
    pub speed: f64,
    /// Multiplier on vertical velocity components.
    pub vertical_scale: f64,
    /// Side of the horizontal box holding start positions (m).
    pub domain: f64,
    pub base_altitude: f64,
    /// Start times are uniform in `[0, start_spread]` (s).
    pub start_spread: f64,
    /// Std-dev of measurement noise added to the wind (kn).
    pub wind_noise: f64,
    /// Amplitude of the spatial modes (kn).
    pub wind_amplitude: f64,
    /// Amplitude of the spatially uniform daily drift (kn).
    pub wind_drift: f64,
    pub seed: u64,
}

impl Default for SrwConfig {
    fn default() -> Self {
        Self {
            n_traj: 100,
            len: 1000,
            dt: 4.0,
            momentum: 0.98,
            noise: 30.0,
            speed: 150.0,
            vertical_scale: 0.05,
            domain: 500e3,
            base_altitude: 10e3,
            start_spread: 6.0 * 3600.0,
            wind_noise: 1.0,
            wind_amplitude: 15.0,
            wind_drift: 15.0,
            seed: 0,
        }
    }
}

impl SrwConfig {
    /// Overrides defaults with any matching keys of `kv`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            n_traj: kv.get_or("n_traj", d.n_traj)?,
            len: kv.get_or("len", d.len)?,
            dt: kv.get_or("dt", d.dt)?,
            momentum: kv.get_or("momentum", d.momentum)?,
            noise: kv.get_or("noise", d.noise)?,
            speed: kv.get_or("speed", d.speed)?,
            vertical_scale: kv.get_or("vertical_scale", d.vertical_scale)?,
            domain: kv.get_or("domain", d.domain)?,
            base_altitude: kv.get_or("base_altitude", d.base_altitude)?,
            start_spread: kv.get_or("start_spread", d.start_spread)?,
            wind_noise: kv.get_or("wind_noise", d.wind_noise)?,
            wind_amplitude: kv.get_or("wind_amplitude", d.wind_amplitude)?,
            wind_drift: kv.get_or("wind_drift", d.wind_drift)?,
            seed: kv.get_or("seed", d.seed)?,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.len == 0 {
            return Err(invalid("n_traj and len must be >= 1"));
        }
        if !(self.dt > 0.0) || !(0.0..=1.0).contains(&self.momentum) || self.noise < 0.0 || self.wind_noise < 0.0 {
            return Err(invalid("need dt > 0, momentum in [0, 1], noise >= 0"));
        }
        Ok(())
    }
}

fn normal3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}

/// Trajectories whose velocity follows `v' = momentum * v + noise * g`.
pub fn generate_smoothed_random_walk(cfg: &SrwConfig) -> Result<Dataset> {
    cfg.validate()?;
    let field = WindField {
        drift_amplitude: cfg.wind_drift,
        ..WindField::random(cfg.seed, cfg.wind_amplitude)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.n_traj.to_string().len();
    let vs = [1.0, 1.0, cfg.vertical_scale];
    let mut groups = Vec::with_capacity(cfg.n_traj);
    for j in 0..cfg.n_traj {
        let id = format!("srw-{j:0width$}");
        let mut pos = [
            rng.random_range(0.0..=cfg.domain),
            rng.random_range(0.0..=cfg.domain),
            cfg.base_altitude + 1000.0 * rng.random_range(-1.0..=1.0),
        ];
        let g = normal3(&mut rng);
        let mut vel = [0, 1, 2].map(|a| cfg.speed * g[a] * vs[a]);
        let t0 = rng.random_range(0.0..=cfg.start_spread);
        let mut rows = Vec::with_capacity(cfg.len);
        for i in 0..cfg.len {
            let p = Point4::new(pos[0], pos[1], pos[2], t0 + i as f64 * cfg.dt);
            let truth = field.eval(p);
            let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let wind = WindVector::new(truth.sx + cfg.wind_noise * e[0], truth.sy + cfg.wind_noise * e[1]);
            rows.push(Record::new(id.clone(), p, wind));
            for a in 0..3 {
                pos[a] += vel[a] * cfg.dt;
            }
            let g = normal3(&mut rng);
            for a in 0..3 {
                vel[a] = cfg.momentum * vel[a] + cfg.noise * g[a] * vs[a];
            }
        }
        groups.push((id, rows));
    }
    Ok(Dataset::from_trajectories(groups))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomPointsConfig {
    pub n: usize,
    /// Side of the cube (m).
    pub side: f64,
    /// Common timestamp of every point (s).
    pub time: f64,
    /// Points per pseudo-trajectory.
    pub group: usize,
    pub seed: u64,
}

impl Default for RandomPointsConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            side: 100e3,
            time: 0.0,
            group: 32,
            seed: 0,
        }
    }
}

impl RandomPointsConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            n: kv.get_or("n", d.n)?,
            side: kv.get_or("side", d.side)?,
            time: kv.get_or("time", d.time)?,
            group: kv.get_or("group", d.group)?,
            seed: kv.get_or("seed", d.seed)?,
        })
    }
}

/// Uniform points in a cube, all measured at the same instant. Consecutive
/// draws are grouped into pseudo-trajectories of `group` points, so the
/// grouping carries no spatial structure.
pub fn generate_random_points(cfg: &RandomPointsConfig) -> Result<Dataset> {
    if cfg.n == 0 || cfg.group == 0 || !(cfg.side > 0.0) {
        return Err(invalid("need n >= 1, group >= 1 and side > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let field = WindField::random(cfg.seed, 15.0);
    let n_groups = cfg.n.div_ceil(cfg.group);
    let width = n_groups.to_string().len();
    let groups = (0..n_groups)
        .map(|g| {
            let id = format!("random-{g:0width$}");
            let len = cfg.group.min(cfg.n - g * cfg.group);
            let rows = (0..len)
                .map(|_| {
                    let p = Point4::new(
                        rng.random_range(0.0..cfg.side),
                        rng.random_range(0.0..cfg.side),
                        rng.random_range(0.0..cfg.side),
                        cfg.time,
                    );
                    Record::new(id.clone(), p, field.eval(p))
                })
                .collect();
            (id, rows)
        })
        .collect();
    Ok(Dataset::from_trajectories(groups))
}
