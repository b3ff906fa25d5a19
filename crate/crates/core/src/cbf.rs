//! Barrier values and generalized gradients.
//!
//! The visibility barrier is `h(t, x) = -d(y(t), F(x))`, the negated signed
//! distance from the evader to the occluded field of view. `F(x)` comes from
//! ray casting, so its gradient is estimated by least squares over a set of
//! state perturbations. Where the fit is poor the function is treated as
//! non-smooth and several one-sided gradient vertices are returned.
//!
//! The safety barrier is the clearance to a scanned point cloud, with one
//! gradient vertex per nearby return.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::agents::PursuerState;
use crate::error::CbfError;
use crate::fov::{occluded_fov, FovParams, FovPolygon};
use crate::world::{OccupancyGrid, PointCloud};
use crate::Point;

pub type StateVec = Vector3<f64>;

/// Finite vertex set approximating a generalized gradient, plus the
/// barrier value and its explicit time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub vertices: Vec<StateVec>,
    pub time_term: f64,
    pub value: f64,
}

impl GradientSet {
    pub fn smooth(vertex: StateVec, value: f64, time_term: f64) -> Self {
        Self {
            vertices: vec![vertex],
            time_term,
            value,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.vertices.len() == 1
    }

    /// Set for `-f` given the set for `f`.
    pub fn negated(&self) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| -v).collect(),
            time_term: -self.time_term,
            value: -self.value,
        }
    }
}

/// State perturbations used by the least-squares gradient estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationScheme {
    pub directions: Vec<StateVec>,
    /// Probe count for non-smooth vertex extraction.
    pub nullspace_samples: usize,
    /// Residual threshold, relative to the perturbation magnitude.
    pub smooth_tol: f64,
}

impl Default for PerturbationScheme {
    fn default() -> Self {
        Self::axis(0.05, 0.05)
    }
}

impl PerturbationScheme {
    /// Six symmetric axis perturbations `±eps_pos` in x, y and `±eps_theta`.
    pub fn axis(eps_pos: f64, eps_theta: f64) -> Self {
        let mut directions = Vec::with_capacity(6);
        for (k, e) in [eps_pos, eps_pos, eps_theta].into_iter().enumerate() {
            let mut d = StateVec::zeros();
            d[k] = e;
            directions.push(d);
            directions.push(-d);
        }
        Self {
            directions,
            nullspace_samples: 4,
            smooth_tol: 0.1,
        }
    }

    /// Largest perturbation norm.
    pub fn eps(&self) -> f64 {
        self.directions.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.directions.len(), 3, |i, j| self.directions[i][j])
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        if self.directions.len() < 3 {
            return Err(CbfError::RankDeficient {
                rank: self.directions.len(),
            });
        }
        if !(self.smooth_tol >= 0.0) {
            return Err(CbfError::Scheme("smooth_tol must be non-negative".into()));
        }
        let rank = self.matrix().rank(1e-12 * self.eps().max(1e-300));
        if rank < 3 {
            return Err(CbfError::RankDeficient { rank });
        }
        Ok(())
    }
}

/// `h = -d(y, F(x))`; positive iff the evader is visible.
pub fn visibility_value(
    grid: &OccupancyGrid,
    x: &PursuerState,
    y: Point,
    params: &FovParams,
) -> Result<f64, CbfError> {
    let poly = occluded_fov(grid, x, params)?;
    Ok(-poly.signed_distance(y).distance)
}

/// `d*(x) = d(y, F(x))`, the quantity differentiated by
/// [`visibility_gradient`].
fn fov_distance(grid: &OccupancyGrid, x: &PursuerState, y: Point, params: &FovParams) -> Result<f64, CbfError> {
    Ok(occluded_fov(grid, x, params)?.signed_distance(y).distance)
}

/// Per-column scale so every column of the perturbation matrix has unit
/// max-magnitude before the least-squares solve.
fn column_scales(c: &DMatrix<f64>) -> [f64; 3] {
    let mut s = [1.0; 3];
    for (j, sj) in s.iter_mut().enumerate() {
        let m = c.column(j).amax();
        if m > 0.0 {
            *sj = m;
        }
    }
    s
}

/// Minimum-norm least-squares `C^+ c` in scaled coordinates, plus the
/// projector onto the nullspace of `C`, both mapped back to state units.
fn pinv_solve(c: &DMatrix<f64>, rhs: &DVector<f64>) -> (StateVec, nalgebra::Matrix3<f64>) {
    let s = column_scales(c);
    let mut cs = c.clone();
    for j in 0..3 {
        cs.column_mut(j).scale_mut(1.0 / s[j]);
    }
    let pinv = cs
        .clone()
        .pseudo_inverse(1e-12)
        .expect("pseudo-inverse with non-negative epsilon");
    let v_scaled = &pinv * rhs;
    let proj_scaled = DMatrix::<f64>::identity(3, 3) - &pinv * &cs;
    let mut v = StateVec::zeros();
    let mut proj = nalgebra::Matrix3::zeros();
    for i in 0..3 {
        v[i] = v_scaled[i] / s[i];
        for j in 0..3 {
            // nullspace directions live in scaled space: n_state = S^-1 n_scaled
            proj[(i, j)] = proj_scaled[(i, j)] / s[i] * s[j];
        }
    }
    (v, proj)
}

/// Deterministic, roughly uniform unit vectors on the sphere.
fn probe_directions(m: usize) -> Vec<StateVec> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..m)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            StateVec::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Least-squares finite-difference gradient of `d*(x) = d(y, F(x))`.
///
/// `v0 = C^+ c`. If the fit residual is within `smooth_tol * eps` the point
/// is treated as smooth and `{v0}` is returned. Otherwise, for each probe
/// direction `n_j`, the perturbations on the `n_j` side give a one-sided
/// fit `C_j^+ c_j + (I - C_j^+ C_j) v0`; the distinct results join `v0`.
/// The returned `time_term` is zero; see [`visibility_barrier`].
pub fn visibility_gradient(
    grid: &OccupancyGrid,
    x: &PursuerState,
    y: Point,
    params: &FovParams,
    scheme: &PerturbationScheme,
) -> Result<GradientSet, CbfError> {
    scheme.validate()?;
    let d0 = fov_distance(grid, x, y, params)?;
    let deltas: Vec<f64> = scheme
        .directions
        .iter()
        .map(|dx| Ok(fov_distance(grid, &x.perturbed(&[dx[0], dx[1], dx[2]]), y, params)? - d0))
        .collect::<Result<_, CbfError>>()?;
    Ok(gradient_from_samples(&scheme.directions, &deltas, d0, scheme))
}

/// The least-squares and non-smooth vertex logic on precomputed samples.
pub fn gradient_from_samples(
    directions: &[StateVec],
    deltas: &[f64],
    value: f64,
    scheme: &PerturbationScheme,
) -> GradientSet {
    let c = DMatrix::from_fn(directions.len(), 3, |i, j| directions[i][j]);
    let rhs = DVector::from_column_slice(deltas);
    let (v0, _) = pinv_solve(&c, &rhs);
    let residual = (&c * DVector::from_column_slice(v0.as_slice()) - &rhs).norm();
    if residual <= scheme.smooth_tol * scheme.eps() {
        return GradientSet::smooth(v0, value, 0.0);
    }
    let mut vertices = vec![v0];
    let tol = 1e-9 * (1.0 + v0.norm());
    // sides are compared in eps-normalised coordinates
    let scale = StateVec::new(
        scheme_col(directions, 0),
        scheme_col(directions, 1),
        scheme_col(directions, 2),
    );
    for probe in probe_directions(scheme.nullspace_samples) {
        let rows: Vec<usize> = (0..directions.len())
            .filter(|&i| directions[i].component_div(&scale).dot(&probe) > 0.0)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let cj = DMatrix::from_fn(rows.len(), 3, |i, j| directions[rows[i]][j]);
        let rj = DVector::from_fn(rows.len(), |i, _| deltas[rows[i]]);
        let (vj, proj) = pinv_solve(&cj, &rj);
        let v = vj + proj * v0;
        if vertices.iter().all(|w| (w - v).norm() > tol) {
            vertices.push(v);
        }
    }
    GradientSet {
        vertices,
        time_term: 0.0,
        value,
    }
}

fn scheme_col(directions: &[StateVec], j: usize) -> f64 {
    let m = directions.iter().map(|d| d[j].abs()).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// `grad_y d(y, F)^T ydot`, with `grad_y d = sign(d) (y - y*) / |y - y*|`.
pub fn visibility_time_term(poly: &FovPolygon, y: Point, ydot: Point) -> f64 {
    let bd = poly.signed_distance(y);
    let diff = y - bd.nearest;
    let n = diff.norm();
    if n == 0.0 {
        return 0.0;
    }
    bd.distance.signum() * diff.dot(&ydot) / n
}

/// Gradient set for the visibility barrier `h = -d*`, with
/// `time_term = dh/dt = -grad_y d . ydot`.
pub fn visibility_barrier(
    grid: &OccupancyGrid,
    x: &PursuerState,
    y: Point,
    ydot: Point,
    params: &FovParams,
    scheme: &PerturbationScheme,
) -> Result<GradientSet, CbfError> {
    let mut set = visibility_gradient(grid, x, y, params, scheme)?.negated();
    let poly = occluded_fov(grid, x, params)?;
    set.time_term = -visibility_time_term(&poly, y, ydot);
    Ok(set)
}

/// Point-cloud clearance barrier.
///
/// `value = min_j |rho_j - p|` over the `n_nearest` returns and one vertex
/// `-(g_j, 0)` per return, where `g_j` points from the pursuer to the
/// return. `None` for an empty cloud (no constraint).
pub fn safety_cbf(cloud: &PointCloud, x: &PursuerState, n_nearest: usize) -> Option<GradientSet> {
    if cloud.is_empty() || n_nearest == 0 {
        return None;
    }
    let p = x.position();
    let mut ranked: Vec<(f64, usize)> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, q)| ((q - p).norm(), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(n_nearest);
    let value = ranked[0].0;
    let vertices = ranked
        .iter()
        .filter(|(d, _)| *d > 0.0)
        .map(|&(d, i)| {
            let g = (cloud.points[i] - p) / d;
            StateVec::new(-g.x, -g.y, 0.0)
        })
        .collect::<Vec<_>>();
    let vertices = if vertices.is_empty() {
        vec![StateVec::zeros()]
    } else {
        vertices
    };
    Some(GradientSet {
        vertices,
        time_term: 0.0,
        value,
    })
}
