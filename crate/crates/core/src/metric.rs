//! Point model and the anisotropic scaled metric.
//!
//! All distances are squared. The full metric is the sum of a spatial part
//! (horizontal and vertical terms weighted separately) and a temporal part,
//! and every function in the search path evaluates it in exactly that
//! association so that lower bounds built from the same pieces stay
//! comparable under floating point rounding.

use crate::error::{invalid, Result};

/// Spatial position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

/// Position plus timestamp (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point4 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

impl Point4 {
    pub const fn new(x: f64, y: f64, z: f64, t: f64) -> Self {
        Self { x, y, z, t }
    }

    pub fn spatial(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.spatial().is_finite() && self.t.is_finite()
    }
}

/// Horizontal wind in knots.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindVector {
    pub sx: f64,
    pub sy: f64,
}

impl WindVector {
    pub const fn new(sx: f64, sy: f64) -> Self {
        Self { sx, sy }
    }

    pub fn is_finite(&self) -> bool {
        self.sx.is_finite() && self.sy.is_finite()
    }
}

/// A single sample of the store. `index` is the dataset-global ordinal and
/// `trajectory` the ordinal of the owning trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub point: Point4,
    pub wind: WindVector,
    pub trajectory: u32,
    pub index: usize,
}

/// Metric scaling `(sigma_xy, sigma_z, sigma_t)`, in 1/m², 1/m² and 1/s².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub sigma_t: f64,
}

impl ScaleParams {
    pub fn new(sigma_xy: f64, sigma_z: f64, sigma_t: f64) -> Result<Self> {
        let s = Self {
            sigma_xy,
            sigma_z,
            sigma_t,
        };
        s.validate()?;
        Ok(s)
    }

    /// Same scale on every axis.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_xy", self.sigma_xy),
            ("sigma_z", self.sigma_z),
            ("sigma_t", self.sigma_t),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest spatial weight; bounds the scaled length of any spatial offset
    /// from its Euclidean length.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_xy.max(self.sigma_z)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sigma_xy, self.sigma_z, self.sigma_t]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.sigma_xy * c, self.sigma_z * c, self.sigma_t * c)
    }
}

/// Which past measurements a query may see.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mask {
    /// Every point is valid regardless of time.
    Unmasked,
    /// Only points with `t_i <= t - t_w` are valid.
    Window(f64),
}

impl Mask {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Mask::Unmasked => Ok(()),
            Mask::Window(tw) if tw.is_finite() && tw >= 0.0 => Ok(()),
            Mask::Window(tw) => Err(invalid(format!("window must be finite and >= 0, got {tw}"))),
        }
    }

    /// Latest admissible timestamp for a query issued at `t`.
    #[inline]
    pub fn cutoff(&self, t: f64) -> f64 {
        match *self {
            Mask::Unmasked => f64::INFINITY,
            Mask::Window(tw) => t - tw,
        }
    }
}

#[inline]
pub(crate) fn spatial_terms(dx: f64, dy: f64, dz: f64, sigma: &ScaleParams) -> f64 {
    sigma.sigma_xy * (dx * dx + dy * dy) + sigma.sigma_z * (dz * dz)
}

#[inline]
pub(crate) fn temporal_term(dt: f64, sigma: &ScaleParams) -> f64 {
    sigma.sigma_t * (dt * dt)
}

pub fn spatial_distance_sq(a: Point3, b: Point3, sigma: &ScaleParams) -> f64 {
    spatial_terms(a.x - b.x, a.y - b.y, a.z - b.z, sigma)
}

pub fn temporal_distance_sq(t1: f64, t2: f64, sigma: &ScaleParams) -> f64 {
    temporal_term(t1 - t2, sigma)
}

pub fn scaled_distance_sq(a: Point4, b: Point4, sigma: &ScaleParams) -> f64 {
    spatial_distance_sq(a.spatial(), b.spatial(), sigma) + temporal_distance_sq(a.t, b.t, sigma)
}
