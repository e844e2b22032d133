//! A small MLP mapping position to scale parameters, and the Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::metric::{Point3, ScaleParams};

/// Added to the softplus output so that sigma never underflows to zero.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine map of each coordinate onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNorm {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl InputNorm {
    pub fn identity() -> Self {
        Self {
            lo: [-1.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn fit<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for (d, v) in [p.x, p.y, p.z].into_iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        if lo.iter().any(|v| !v.is_finite()) {
            return Self::identity();
        }
        Self { lo, hi }
    }

    pub fn apply(&self, p: Point3) -> [f64; 3] {
        let v = [p.x, p.y, p.z];
        std::array::from_fn(|d| {
            let w = self.hi[d] - self.lo[d];
            if w > 0.0 {
                2.0 * (v[d] - self.lo[d]) / w - 1.0
            } else {
                0.0
            }
        })
    }
}

/// `3 -> hidden -> hidden -> 3` with tanh hidden units and
/// `sigma_j = scale_j * (softplus(o_j) + SIGMA_FLOOR)` on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer's
/// row-major weights followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaNet {
    pub hidden: usize,
    pub params: Vec<f64>,
    pub scale: [f64; 3],
    pub norm: InputNorm,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: [f64; 3],
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: [f64; 3],
}

impl SigmaNet {
    pub fn num_params(hidden: usize) -> usize {
        (3 * hidden + hidden) + (hidden * hidden + hidden) + (hidden * 3 + 3)
    }

    /// Random hidden layers, a near-zero output layer and output biases
    /// chosen so that the initial net emits roughly `scale` everywhere.
    pub fn new(hidden: usize, scale: ScaleParams, norm: InputNorm, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(invalid("hidden width must be >= 1"));
        }
        scale.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::num_params(hidden));
        let mut layer = |fan_in: usize, fan_out: usize, gain: f64, bias: f64, params: &mut Vec<f64>| {
            let r = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-r..r)));
            params.extend(std::iter::repeat_n(bias, fan_out));
        };
        layer(3, hidden, 1.0, 0.0, &mut params);
        layer(hidden, hidden, 1.0, 0.0, &mut params);
        // softplus(ln(e - 1)) = 1
        layer(hidden, 3, 0.1, (std::f64::consts::E - 1.0).ln(), &mut params);
        Ok(Self {
            hidden,
            params,
            scale: scale.as_array(),
            norm,
        })
    }

    pub fn from_parts(hidden: usize, params: Vec<f64>, scale: [f64; 3], norm: InputNorm) -> Result<Self> {
        if hidden == 0 || params.len() != Self::num_params(hidden) {
            return Err(invalid(format!(
                "expected {} parameters for hidden width {hidden}, got {}",
                Self::num_params(hidden),
                params.len()
            )));
        }
        ScaleParams::from_array(scale)?;
        Ok(Self {
            hidden,
            params,
            scale,
            norm,
        })
    }

    fn offsets(&self) -> [usize; 6] {
        let h = self.hidden;
        let w1 = 0;
        let b1 = w1 + 3 * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + 3 * h;
        [w1, b1, w2, b2, w3, b3]
    }

    fn dense(&self, w: usize, b: usize, input: &[f64], n_out: usize) -> Vec<f64> {
        let n_in = input.len();
        (0..n_out)
            .map(|o| {
                let row = &self.params[w + o * n_in..w + (o + 1) * n_in];
                self.params[b + o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// Forward pass on an already normalized input.
    pub fn forward_normalized(&self, input: [f64; 3]) -> (ScaleParams, Trace) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let h = self.hidden;
        let h1: Vec<f64> = self.dense(w1, b1, &input, h).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = self.dense(w2, b2, &h1, h).into_iter().map(f64::tanh).collect();
        let o = self.dense(w3, b3, &h2, 3);
        let out = [o[0], o[1], o[2]];
        let s: [f64; 3] = std::array::from_fn(|j| self.scale[j] * (softplus(out[j]) + SIGMA_FLOOR));
        let sigma = ScaleParams {
            sigma_xy: s[0],
            sigma_z: s[1],
            sigma_t: s[2],
        };
        (sigma, Trace { input, h1, h2, out })
    }

    pub fn forward(&self, position: Point3) -> ScaleParams {
        self.forward_normalized(self.norm.apply(position)).0
    }

    pub fn forward_traced(&self, position: Point3) -> (ScaleParams, Trace) {
        self.forward_normalized(self.norm.apply(position))
    }

    /// Adds `d loss / d params` to `grad` given `d loss / d sigma`.
    pub fn backward(&self, trace: &Trace, d_sigma: [f64; 3], grad: &mut [f64]) {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let h = self.hidden;
        let d_out: [f64; 3] = std::array::from_fn(|j| d_sigma[j] * self.scale[j] * sigmoid(trace.out[j]));

        let mut d_h2 = vec![0.0; h];
        for (o, &g) in d_out.iter().enumerate() {
            grad[b3 + o] += g;
            for i in 0..h {
                grad[w3 + o * h + i] += g * trace.h2[i];
                d_h2[i] += g * self.params[w3 + o * h + i];
            }
        }
        let d_z2: Vec<f64> = d_h2.iter().zip(&trace.h2).map(|(g, a)| g * (1.0 - a * a)).collect();

        let mut d_h1 = vec![0.0; h];
        for (o, &g) in d_z2.iter().enumerate() {
            grad[b2 + o] += g;
            for i in 0..h {
                grad[w2 + o * h + i] += g * trace.h1[i];
                d_h1[i] += g * self.params[w2 + o * h + i];
            }
        }
        let d_z1: Vec<f64> = d_h1.iter().zip(&trace.h1).map(|(g, a)| g * (1.0 - a * a)).collect();

        for (o, &g) in d_z1.iter().enumerate() {
            grad[b1 + o] += g;
            for i in 0..3 {
                grad[w1 + o * 3 + i] += g * trace.input[i];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// Returns the update to subtract from the parameters.
    pub fn delta(&mut self, grad: &[f64]) -> Vec<f64> {
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        grad.iter()
            .enumerate()
            .map(|(i, &g)| {
                self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                c.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps)
            })
            .collect()
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for (p, d) in params.iter_mut().zip(self.delta(grad)) {
            *p -= d;
        }
    }
}
