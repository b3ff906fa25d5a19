//! Slack-relaxed CBF-QP over the decision vector `(v, omega, delta)`:
//!
//! ```text
//! min  |u - r|^2 + lambda delta^2
//! s.t. v_h^T G(x) u - delta >= -gamma_v h - w        for each visibility vertex
//!      v_s^T G(x) u         >= -gamma_s (d - radius)  for each safety vertex
//!      u in U
//! ```
//!
//! with unicycle `G(x) = [[cos th, 0], [sin th, 0], [0, 1]]` and `f = 0`.

use serde::{Deserialize, Serialize};

use crate::agents::{wrap_angle, ControlInput, PursuerState};
use crate::cbf::GradientSet;
use crate::error::ControlError;
use crate::qp::{self, QpProblem, QpRow, QpStatus};
use crate::Point;

/// Box `[v_lo, v_hi] x [omega_lo, omega_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBox {
    pub v: [f64; 2],
    pub omega: [f64; 2],
}

impl InputBox {
    /// CARLA driving scenario: `[0, 12] m/s x [-1, 1] rad/s`.
    pub const DRIVING: InputBox = InputBox {
        v: [0.0, 12.0],
        omega: [-1.0, 1.0],
    };
    /// Jackal robot scenario: `[0, 0.5] m/s x [-0.5, 0.5] rad/s`.
    pub const ROBOT: InputBox = InputBox {
        v: [0.0, 0.5],
        omega: [-0.5, 0.5],
    };

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(
            u.v.clamp(self.v[0], self.v[1]),
            u.omega.clamp(self.omega[0], self.omega[1]),
        )
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        (self.v[0]..=self.v[1]).contains(&u.v) && (self.omega[0]..=self.omega[1]).contains(&u.omega)
    }
}

/// Proportional pursuit gains for [`fallback_reference`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PursuitGains {
    pub k_v: f64,
    pub k_omega: f64,
    /// Seconds of evader velocity used to predict its position.
    pub lookahead: f64,
    /// Obstacles closer than this deflect the pursuit direction.
    pub obstacle_influence: f64,
}

impl Default for PursuitGains {
    fn default() -> Self {
        Self {
            k_v: 0.5,
            k_omega: 1.5,
            lookahead: 1.0,
            obstacle_influence: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub gamma_v: f64,
    pub gamma_s: f64,
    pub lambda: f64,
    pub u_box: InputBox,
    pub robot_radius: f64,
    /// Extra clearance in the safety row, absorbing sampled-time overshoot.
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
    pub standoff: f64,
    #[serde(default)]
    pub gains: PursuitGains,
}

fn default_margin() -> f64 {
    0.05
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma_v > 0.0 && self.gamma_s > 0.0 && self.lambda > 0.0) {
            return Err("gamma_v, gamma_s and lambda must be positive".into());
        }
        if !(self.u_box.v[0] <= self.u_box.v[1] && self.u_box.omega[0] <= self.u_box.omega[1]) {
            return Err("input box bounds are inverted".into());
        }
        if !(self.robot_radius >= 0.0 && self.safety_margin >= 0.0) {
            return Err("robot radius and safety margin must be non-negative".into());
        }
        Ok(())
    }
}

/// Which barrier a QP row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Visibility,
    Safety,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRows {
    pub rows: Vec<QpRow>,
    pub kinds: Vec<RowKind>,
}

/// Barrier gradient sets evaluated at the current state. Either may be
/// absent: no evader estimate, or no obstacle returns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Barriers {
    pub visibility: Option<GradientSet>,
    pub safety: Option<GradientSet>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub u: ControlInput,
    pub delta: f64,
    pub visibility_active: bool,
    pub safety_active: bool,
    pub status: QpStatus,
    pub kkt_residual: f64,
}

/// `v^T G(x)` for the unicycle input matrix.
fn lie_g(v: &crate::cbf::StateVec, x: &PursuerState) -> [f64; 2] {
    let (s, c) = x.theta.sin_cos();
    [v[0] * c + v[1] * s, v[2]]
}

/// One row per gradient vertex; visibility rows first.
pub fn build_constraints(
    h: Option<&GradientSet>,
    s: Option<&GradientSet>,
    x: &PursuerState,
    cfg: &ControllerConfig,
) -> Result<ConstraintRows, ControlError> {
    let mut rows = Vec::new();
    let mut kinds = Vec::new();
    if let Some(h) = h {
        if h.vertices.is_empty() {
            return Err(ControlError::EmptyGradient("visibility"));
        }
        for v in &h.vertices {
            let g = lie_g(v, x);
            rows.push(QpRow::new(vec![g[0], g[1], -1.0], -cfg.gamma_v * h.value - h.time_term));
            kinds.push(RowKind::Visibility);
        }
    }
    if let Some(s) = s {
        if s.vertices.is_empty() {
            return Err(ControlError::EmptyGradient("safety"));
        }
        // inside the margin the row only forbids closing in, so stopping
        // stays feasible
        let clearance = (s.value - cfg.robot_radius - cfg.safety_margin).max(0.0);
        for v in &s.vertices {
            let g = lie_g(v, x);
            rows.push(QpRow::new(vec![g[0], g[1], 0.0], -cfg.gamma_s * clearance));
            kinds.push(RowKind::Safety);
        }
    }
    Ok(ConstraintRows { rows, kinds })
}

/// Assemble the QP for one control tick.
pub fn build_problem(
    x: &PursuerState,
    reference: ControlInput,
    barriers: &Barriers,
    cfg: &ControllerConfig,
) -> Result<(QpProblem, Vec<RowKind>), ControlError> {
    let r = cfg.u_box.clamp(reference);
    let cons = build_constraints(barriers.visibility.as_ref(), barriers.safety.as_ref(), x, cfg)?;
    let problem = QpProblem::new(
        vec![1.0, 1.0, cfg.lambda],
        vec![-2.0 * r.v, -2.0 * r.omega, 0.0],
        cons.rows,
        vec![
            (cfg.u_box.v[0], cfg.u_box.v[1]),
            (cfg.u_box.omega[0], cfg.u_box.omega[1]),
            (f64::NEG_INFINITY, f64::INFINITY),
        ],
    )?;
    Ok((problem, cons.kinds))
}

/// Solve the CBF-QP for the input closest to `reference`.
pub fn control_step(
    x: &PursuerState,
    reference: ControlInput,
    barriers: &Barriers,
    cfg: &ControllerConfig,
) -> Result<ControlOutput, ControlError> {
    let (problem, kinds) = build_problem(x, reference, barriers, cfg)?;
    let sol = qp::solve(&problem);
    if sol.status == QpStatus::Infeasible {
        return Err(ControlError::Infeasible);
    }
    let active = |kind| {
        sol.active_set
            .iter()
            .any(|&i| i < kinds.len() && kinds[i] == kind)
    };
    Ok(ControlOutput {
        u: ControlInput::new(sol.z[0], sol.z[1]),
        delta: sol.z[2],
        visibility_active: active(RowKind::Visibility),
        safety_active: active(RowKind::Safety),
        status: sol.status,
        kkt_residual: sol.kkt_residual,
    })
}

/// Pursuit direction deflected by a nearby obstacle.
///
/// Within `influence` of the obstacle, the component of `desired` pointing
/// into it is removed, so the pursuer slides along the boundary instead of
/// stalling against it. A head-on approach slides to the left.
pub fn slide_direction(desired: Point, to_obstacle: Point, clearance: f64, influence: f64) -> Point {
    let n = to_obstacle.norm();
    let d = desired.norm();
    if n == 0.0 || d == 0.0 || clearance >= influence {
        return desired;
    }
    let n = to_obstacle / n;
    let into = desired.dot(&n);
    if into <= 0.0 {
        return desired;
    }
    let tangent = desired - n * into;
    if tangent.norm() > 1e-9 * d {
        tangent * (d / tangent.norm())
    } else {
        Point::new(-n.y, n.x) * d
    }
}

/// Proportional pursuit toward the predicted evader position.
pub fn fallback_reference(
    x: &PursuerState,
    evader_position: Point,
    evader_velocity: Point,
    standoff: f64,
    gains: &PursuitGains,
    u_box: &InputBox,
) -> ControlInput {
    let target = evader_position + evader_velocity * gains.lookahead;
    let diff = target - x.position();
    let dist = diff.norm();
    let err = if dist > 0.0 {
        wrap_angle(diff.y.atan2(diff.x) - x.theta)
    } else {
        0.0
    };
    u_box.clamp(ControlInput::new(
        gains.k_v * (dist - standoff).max(0.0),
        gains.k_omega * err,
    ))
}
