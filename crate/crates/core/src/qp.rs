//! Exact solver for small, strictly convex, diagonal-weight QPs:
//!
//! ```text
//! minimise   sum_i q_i z_i^2 + l_i z_i
//! subject to a_k . z >= b_k          (rows)
//!            lo_i <= z_i <= hi_i     (box; infinite bounds allowed)
//! ```
//!
//! Working sets are enumerated by size, then lexicographically, and the
//! first one whose equality-constrained optimum is primal and dual feasible
//! is returned. For a strictly convex problem that point is the unique
//! global optimum, and the enumeration order makes the reported working set
//! deterministic.
//!
//! Constraint indices in [`QpSolution::active_set`] address the combined
//! list: rows `0..m`, then lower bounds `m..m+n`, then upper bounds
//! `m+n..m+2n`.

use nalgebra::{DMatrix, DVector};

use crate::error::QpError;

const MAX_ROWS: usize = 64;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;

/// One inequality `a . z >= b`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpRow {
    pub a: Vec<f64>,
    pub b: f64,
}

impl QpRow {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Self { a, b }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    dim: usize,
    quad_diag: Vec<f64>,
    linear: Vec<f64>,
    rows: Vec<QpRow>,
    bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub active_set: Vec<usize>,
    /// Multipliers for `active_set`, in the same order.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub objective: f64,
    pub status: QpStatus,
}

impl QpProblem {
    pub fn new(
        quad_diag: Vec<f64>,
        linear: Vec<f64>,
        rows: Vec<QpRow>,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self, QpError> {
        let dim = quad_diag.len();
        if linear.len() != dim || bounds.len() != dim {
            return Err(QpError::Dimension(format!(
                "quad_diag {dim}, linear {}, bounds {}",
                linear.len(),
                bounds.len()
            )));
        }
        for (index, &value) in quad_diag.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(QpError::NonConvex { index, value });
            }
        }
        for (index, &(lo, hi)) in bounds.iter().enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(QpError::Box { index, lo, hi });
            }
        }
        if rows.len() > MAX_ROWS {
            return Err(QpError::TooManyRows(rows.len()));
        }
        if let Some(r) = rows.iter().find(|r| r.a.len() != dim) {
            return Err(QpError::Dimension(format!("row has {} coefficients, expected {dim}", r.a.len())));
        }
        Ok(Self {
            dim,
            quad_diag,
            linear,
            rows,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[QpRow] {
        &self.rows
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.quad_diag)
            .zip(&self.linear)
            .map(|((z, q), l)| q * z * z + l * z)
            .sum()
    }

    /// Largest violation of any row or bound at `z` (zero if feasible).
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .map(|r| r.b - dot(&r.a, z))
            .fold(0.0, f64::max);
        let bx = self
            .bounds
            .iter()
            .zip(z)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi))
            .fold(0.0, f64::max);
        rows.max(bx)
    }

    /// All constraints in `a . z >= b` form with unit-norm `a`, tagged with
    /// their combined index. Zero rows are returned separately.
    fn normalised(&self) -> (Vec<(usize, Vec<f64>, f64)>, Vec<f64>) {
        let m = self.rows.len();
        let n = self.dim;
        let mut cons = Vec::with_capacity(m + 2 * n);
        let mut zero_rows = Vec::new();
        for (k, r) in self.rows.iter().enumerate() {
            let norm = r.a.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                zero_rows.push(r.b);
            } else {
                cons.push((k, r.a.iter().map(|v| v / norm).collect(), r.b / norm));
            }
        }
        for (j, &(lo, _)) in self.bounds.iter().enumerate() {
            if lo.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                cons.push((m + j, a, lo));
            }
        }
        for (j, &(_, hi)) in self.bounds.iter().enumerate() {
            if hi.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = -1.0;
                cons.push((m + n + j, a, -hi));
            }
        }
        (cons, zero_rows)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    first: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Option<Self> {
        (k <= n).then(|| Self {
            n,
            idx: (0..k).collect(),
            first: true,
        })
    }

    fn advance(&mut self) -> Option<&[usize]> {
        if self.first {
            self.first = false;
            return Some(&self.idx);
        }
        let k = self.idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(&self.idx);
            }
        }
        None
    }
}

/// Solve `p` exactly.
pub fn solve(p: &QpProblem) -> QpSolution {
    let n = p.dim;
    let (cons, zero_rows) = p.normalised();
    let infeasible = || QpSolution {
        z: vec![f64::NAN; n],
        active_set: Vec::new(),
        multipliers: Vec::new(),
        kkt_residual: f64::INFINITY,
        objective: f64::INFINITY,
        status: QpStatus::Infeasible,
    };
    if zero_rows.iter().any(|&b| b > PRIMAL_TOL) {
        return infeasible();
    }
    let hinv: Vec<f64> = p.quad_diag.iter().map(|q| 1.0 / (2.0 * q)).collect();
    let unconstrained: Vec<f64> = p.linear.iter().zip(&hinv).map(|(l, h)| -l * h).collect();

    for k in 0..=n.min(cons.len()) {
        let Some(mut combos) = Combinations::new(cons.len(), k) else {
            break;
        };
        while let Some(set) = combos.advance() {
            if let Some((z, mu)) = try_working_set(&cons, set, &hinv, &p.linear, &unconstrained) {
                let z = clamp_to_box(z, &p.bounds);
                let active_set: Vec<usize> = set.iter().map(|&s| cons[s].0).collect();
                let kkt = kkt_residual(p, &cons, set, &z, &mu);
                return QpSolution {
                    objective: p.objective(&z),
                    z,
                    active_set,
                    multipliers: mu,
                    kkt_residual: kkt,
                    status: QpStatus::Optimal,
                };
            }
        }
    }
    infeasible()
}

fn try_working_set(
    cons: &[(usize, Vec<f64>, f64)],
    set: &[usize],
    hinv: &[f64],
    linear: &[f64],
    unconstrained: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = hinv.len();
    let k = set.len();
    let (z, mu) = if k == 0 {
        (unconstrained.to_vec(), Vec::new())
    } else {
        let a = DMatrix::from_fn(k, n, |i, j| cons[set[i]].1[j]);
        // rows are unit-norm; reject near-dependent working sets
        let gram = &a * a.transpose();
        if gram.clone().symmetric_eigenvalues().min() < 1e-12 {
            return None;
        }
        let h = DMatrix::from_diagonal(&DVector::from_column_slice(hinv));
        let m = &a * &h * a.transpose();
        let l = DVector::from_column_slice(linear);
        let b = DVector::from_fn(k, |i, _| cons[set[i]].2);
        let rhs = b + &a * &h * &l;
        let mu = m.cholesky()?.solve(&rhs);
        if mu.iter().any(|&v| v < -DUAL_TOL) {
            return None;
        }
        let z = &h * (a.transpose() * &mu - l);
        (z.iter().copied().collect(), mu.iter().copied().collect())
    };
    let feasible = cons
        .iter()
        .all(|(_, a, b)| dot(a, &z) >= b - PRIMAL_TOL * (1.0 + b.abs()));
    feasible.then_some((z, mu))
}

fn clamp_to_box(mut z: Vec<f64>, bounds: &[(f64, f64)]) -> Vec<f64> {
    for (v, &(lo, hi)) in z.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
    z
}

/// Max of stationarity, primal, dual and complementarity violations.
fn kkt_residual(p: &QpProblem, cons: &[(usize, Vec<f64>, f64)], set: &[usize], z: &[f64], mu: &[f64]) -> f64 {
    let n = p.dim;
    let mut grad: Vec<f64> = (0..n).map(|j| 2.0 * p.quad_diag[j] * z[j] + p.linear[j]).collect();
    for (m, &s) in mu.iter().zip(set) {
        for j in 0..n {
            grad[j] -= m * cons[s].1[j];
        }
    }
    let stationarity = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let primal = cons
        .iter()
        .map(|(_, a, b)| b - dot(a, z))
        .fold(0.0, f64::max);
    let dual = mu.iter().map(|m| -m).fold(0.0, f64::max);
    let comp = mu
        .iter()
        .zip(set)
        .map(|(m, &s)| (m * (dot(&cons[s].1, z) - cons[s].2)).abs())
        .fold(0.0, f64::max);
    stationarity.max(primal).max(dual).max(comp)
}
