//! Pursuer and evader motion models.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::Point;

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    // floor rounding can leave w == pi for inputs just below an odd multiple
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Differential-drive pose `(x, y, theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PursuerState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PursuerState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point {
        Point::new(self.theta.cos(), self.theta.sin())
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// Add a state-space offset, rewrapping the heading.
    pub fn perturbed(&self, dx: &[f64; 3]) -> Self {
        Self::new(self.x + dx[0], self.y + dx[1], self.theta + dx[2])
    }
}

/// Linear and angular velocity `(v, omega)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Exact constant-input unicycle flow over `dt`.
pub fn pursuer_step(s: &PursuerState, u: &ControlInput, dt: f64) -> PursuerState {
    let th1 = s.theta + u.omega * dt;
    let (x, y) = if u.omega.abs() < 1e-9 {
        let (sn, cs) = (s.theta + 0.5 * u.omega * dt).sin_cos();
        (s.x + u.v * dt * cs, s.y + u.v * dt * sn)
    } else {
        let r = u.v / u.omega;
        (
            s.x + r * (th1.sin() - s.theta.sin()),
            s.y - r * (th1.cos() - s.theta.cos()),
        )
    };
    PursuerState::new(x, y, th1)
}

/// Lissajous evader path `[A sin(a t + gamma), B sin(b t)] + center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LissajousParams {
    #[serde(rename = "A")]
    pub amp_x: f64,
    #[serde(rename = "B")]
    pub amp_y: f64,
    #[serde(rename = "a")]
    pub rate_x: f64,
    #[serde(rename = "b")]
    pub rate_y: f64,
    pub gamma: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

impl LissajousParams {
    /// CARLA-scale curve: A=180, a=0.15, B=90, b=0.40, gamma=2.05.
    pub const PAPER: LissajousParams = LissajousParams {
        amp_x: 180.0,
        amp_y: 90.0,
        rate_x: 0.15,
        rate_y: 0.40,
        gamma: 2.05,
        center: [0.0, 0.0],
    };

    /// Upper bound on the curve's speed.
    pub fn speed_bound(&self) -> f64 {
        (self.amp_x * self.rate_x).abs().max((self.amp_y * self.rate_y).abs()) * 2f64.sqrt()
    }
}

/// Position and velocity on the Lissajous curve at time `t`.
pub fn lissajous_state(t: f64, p: &LissajousParams) -> (Point, Point) {
    let ph = p.rate_x * t + p.gamma;
    let y = Point::new(
        p.center[0] + p.amp_x * ph.sin(),
        p.center[1] + p.amp_y * (p.rate_y * t).sin(),
    );
    let ydot = Point::new(
        p.amp_x * p.rate_x * ph.cos(),
        p.amp_y * p.rate_y * (p.rate_y * t).cos(),
    );
    (y, ydot)
}

/// Evader motion model selected in the scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaderModel {
    Lissajous(LissajousParams),
    /// Constant-speed traversal of a polyline; `cyclic` closes the loop.
    Waypoints {
        points: Vec<[f64; 2]>,
        speed: f64,
        #[serde(default)]
        cyclic: bool,
    },
    /// Velocity commands from outside (teleoperation), clamped to `speed_bound`.
    External { start: [f64; 2], speed_bound: f64 },
}

/// Evader truth at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaderState {
    pub position: Point,
    pub velocity: Point,
}

impl EvaderModel {
    /// The speed bound `k` every emitted velocity respects.
    pub fn speed_bound(&self) -> f64 {
        match self {
            EvaderModel::Lissajous(p) => p.speed_bound(),
            EvaderModel::Waypoints { speed, .. } => *speed,
            EvaderModel::External { speed_bound, .. } => *speed_bound,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            EvaderModel::Lissajous(p) => {
                if !(p.amp_x > 0.0 && p.amp_y >= 0.0) {
                    return Err("lissajous amplitudes must be positive".into());
                }
            }
            EvaderModel::Waypoints { points, speed, .. } => {
                if points.is_empty() {
                    return Err("waypoint list is empty".into());
                }
                if !(*speed >= 0.0) {
                    return Err("waypoint speed must be non-negative".into());
                }
            }
            EvaderModel::External { speed_bound, .. } => {
                if !(*speed_bound >= 0.0) {
                    return Err("speed bound must be non-negative".into());
                }
            }
        }
        Ok(())
    }

    /// State at `t = 0`.
    pub fn initial(&self) -> EvaderState {
        match self {
            EvaderModel::Lissajous(p) => {
                let (position, velocity) = lissajous_state(0.0, p);
                EvaderState { position, velocity }
            }
            EvaderModel::Waypoints { .. } => self.waypoint_state(0.0),
            EvaderModel::External { start, .. } => EvaderState {
                position: Point::new(start[0], start[1]),
                velocity: Point::zeros(),
            },
        }
    }

    fn waypoint_state(&self, t: f64) -> EvaderState {
        let EvaderModel::Waypoints { points, speed, cyclic } = self else {
            unreachable!()
        };
        let pts: Vec<Point> = points.iter().map(|p| Point::new(p[0], p[1])).collect();
        let mut legs: Vec<(Point, Point)> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        if *cyclic && pts.len() > 1 {
            legs.push((pts[pts.len() - 1], pts[0]));
        }
        let total: f64 = legs.iter().map(|(a, b)| (b - a).norm()).sum();
        if total == 0.0 || *speed == 0.0 {
            return EvaderState {
                position: pts[0],
                velocity: Point::zeros(),
            };
        }
        let mut s = speed * t.max(0.0);
        if *cyclic {
            s = s.rem_euclid(total);
        } else if s >= total {
            return EvaderState {
                position: *pts.last().unwrap(),
                velocity: Point::zeros(),
            };
        }
        for (a, b) in &legs {
            let len = (b - a).norm();
            if len == 0.0 {
                continue;
            }
            if s < len {
                let dir = (b - a) / len;
                return EvaderState {
                    position: a + dir * s,
                    velocity: dir * *speed,
                };
            }
            s -= len;
        }
        EvaderState {
            position: *pts.last().unwrap(),
            velocity: Point::zeros(),
        }
    }

    /// Path length of a waypoint model (closing leg included when cyclic).
    pub fn path_length(&self) -> Option<f64> {
        let EvaderModel::Waypoints { points, cyclic, .. } = self else {
            return None;
        };
        let mut len: f64 = points
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum();
        if *cyclic && points.len() > 1 {
            let (a, b) = (points[points.len() - 1], points[0]);
            len += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        }
        Some(len)
    }
}

/// Clamp a velocity to norm `k`.
pub fn clamp_speed(v: Point, k: f64) -> Point {
    let n = v.norm();
    if n > k && n > 0.0 {
        v * (k / n)
    } else {
        v
    }
}

/// Advance the evader from `current` at time `t` to `t + dt`.
///
/// `command` is only read by the external model; a missing command means
/// zero velocity.
pub fn evader_step(
    model: &EvaderModel,
    current: &EvaderState,
    t: f64,
    dt: f64,
    command: Option<Point>,
) -> EvaderState {
    match model {
        EvaderModel::Lissajous(p) => {
            let (position, velocity) = lissajous_state(t + dt, p);
            EvaderState { position, velocity }
        }
        EvaderModel::Waypoints { .. } => model.waypoint_state(t + dt),
        EvaderModel::External { speed_bound, .. } => {
            let cmd = command
                .filter(|c| c.iter().all(|v| v.is_finite()))
                .unwrap_or_else(Point::zeros);
            let v = clamp_speed(cmd, *speed_bound);
            EvaderState {
                position: current.position + v * dt,
                velocity: v,
            }
        }
    }
}
