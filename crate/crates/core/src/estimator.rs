//! Constant-velocity Kalman filter for the evader.
//!
//! The motion and measurement models are both linear, so this is a plain
//! Kalman filter. State is `[px, py, vx, vy]`; measurements are positions.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::EstimatorError;
use crate::fov::FovPolygon;
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// White-acceleration intensity, m^2/s^3.
    pub q: f64,
    /// Position measurement variance, m^2.
    pub r: f64,
    /// Seconds without a detection before the track is declared lost.
    pub lost_timeout: f64,
    /// Initial `[pos, pos, vel, vel]` variances.
    pub init_var: [f64; 4],
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            q: 0.5,
            r: 0.01,
            lost_timeout: 3.0,
            init_var: [0.1, 0.1, 1.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaderEstimate {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub last_seen: f64,
    pub valid: bool,
    /// Velocity norm bound `k`.
    pub speed_bound: f64,
}

impl EvaderEstimate {
    /// Track initialised from a first detection, zero velocity.
    pub fn from_detection(z: Point, t: f64, cfg: &EstimatorConfig, speed_bound: f64) -> Self {
        Self {
            mean: Vector4::new(z.x, z.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::from(cfg.init_var)),
            last_seen: t,
            valid: true,
            speed_bound,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.mean[2], self.mean[3])
    }

    fn clamp_velocity(&mut self) {
        let v = self.velocity();
        let n = v.norm();
        if n > self.speed_bound && n > 0.0 {
            let s = self.speed_bound / n;
            self.mean[2] *= s;
            self.mean[3] *= s;
        }
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_noise(dt: f64, q: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    let mut m = Matrix4::zeros();
    for axis in 0..2 {
        let (p, v) = (axis, axis + 2);
        m[(p, p)] = q * a;
        m[(p, v)] = q * b;
        m[(v, p)] = q * b;
        m[(v, v)] = q * c;
    }
    m
}

fn measurement() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Constant-velocity time update.
pub fn predict(e: &EvaderEstimate, dt: f64, q: f64) -> EvaderEstimate {
    if dt <= 0.0 {
        return *e;
    }
    let f = transition(dt);
    let mut out = *e;
    out.mean = f * e.mean;
    let p = f * e.covariance * f.transpose() + process_noise(dt, q);
    out.covariance = 0.5 * (p + p.transpose());
    out
}

/// Position measurement update with Joseph-form covariance.
pub fn update(e: &EvaderEstimate, z: Point, r: f64, t: f64) -> Result<EvaderEstimate, EstimatorError> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(EstimatorError::NonFinite);
    }
    if !(r > 0.0) {
        return Err(EstimatorError::Variance(r));
    }
    let h = measurement();
    let rm = Matrix2::identity() * r;
    let s = h * e.covariance * h.transpose() + rm;
    let s_inv = s.try_inverse().ok_or(EstimatorError::Variance(r))?;
    let k = e.covariance * h.transpose() * s_inv;
    let innov = Vector2::new(z.x, z.y) - h * e.mean;
    let mut out = *e;
    out.mean = e.mean + k * innov;
    let ikh = Matrix4::identity() - k * h;
    let p = ikh * e.covariance * ikh.transpose() + k * rm * k.transpose();
    out.covariance = 0.5 * (p + p.transpose());
    out.last_seen = t;
    out.valid = true;
    out.clamp_velocity();
    Ok(out)
}

/// Simulated camera: a noisy detection iff the true position is in the FoV.
pub fn gate<R: Rng + ?Sized>(poly: &FovPolygon, z_true: Point, r: f64, rng: &mut R) -> Option<Point> {
    if !poly.contains(z_true) {
        return None;
    }
    if r <= 0.0 {
        return Some(z_true);
    }
    let n = Normal::new(0.0, r.sqrt()).expect("finite std-dev");
    Some(z_true + Point::new(n.sample(rng), n.sample(rng)))
}

/// Filter state owned by the simulation loop.
#[derive(Clone, Debug)]
pub struct Tracker {
    pub cfg: EstimatorConfig,
    pub speed_bound: f64,
    pub estimate: Option<EvaderEstimate>,
    pub updates: usize,
}

impl Tracker {
    pub fn new(cfg: EstimatorConfig, speed_bound: f64) -> Self {
        Self {
            cfg,
            speed_bound,
            estimate: None,
            updates: 0,
        }
    }

    /// Predict to `t`, then fold in `detection` if there is one.
    pub fn tick(&mut self, t: f64, dt: f64, detection: Option<Point>) -> Result<(), EstimatorError> {
        let next = match (self.estimate, detection) {
            (None, None) => None,
            (None, Some(z)) => {
                self.updates += 1;
                Some(EvaderEstimate::from_detection(z, t, &self.cfg, self.speed_bound))
            }
            (Some(e), det) => {
                let mut e = predict(&e, dt, self.cfg.q);
                if let Some(z) = det {
                    e = update(&e, z, self.cfg.r, t)?;
                    self.updates += 1;
                } else if t - e.last_seen > self.cfg.lost_timeout {
                    // lost: stop extrapolating a stale velocity
                    e.valid = false;
                    e.mean[2] = 0.0;
                    e.mean[3] = 0.0;
                }
                Some(e)
            }
        };
        self.estimate = next;
        Ok(())
    }
}
