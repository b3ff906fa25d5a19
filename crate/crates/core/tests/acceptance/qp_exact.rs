//! Random three-variable QPs: KKT conditions re-derived from the returned
//! point and active set, and the objective compared with a 201^3 grid.

use nalgebra::{DMatrix, DVector};
use pursuit_core::qp::{solve, QpRow, QpStatus};
use pursuit_core::QpProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Outcome;

const PROBLEMS: usize = 1000;
const GRID: usize = 201;

struct Random {
    q: [f64; 3],
    l: [f64; 3],
    rows: Vec<([f64; 3], f64)>,
    bounds: [(f64, f64); 3],
}

fn draw(rng: &mut ChaCha8Rng) -> Random {
    let q = [(); 3].map(|_| 10f64.powf(rng.random_range(-1.0..2.0)));
    let l = [(); 3].map(|_| rng.random_range(-8.0..8.0));
    let bounds = [(); 3].map(|_| {
        let lo = rng.random_range(-2.0..0.5);
        (lo, lo + rng.random_range(0.5..3.0))
    });
    // rows pass near a random box point, so the problem stays feasible
    let anchor: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
    let m = rng.random_range(0..=5);
    let rows = (0..m)
        .map(|_| {
            let a = [(); 3].map(|_| StandardNormal.sample(rng));
            let b = a.iter().zip(&anchor).map(|(a, z)| a * z).sum::<f64>() - rng.random_range(0.0..0.5);
            (a, b)
        })
        .collect();
    Random { q, l, rows, bounds }
}

fn objective(r: &Random, z: &[f64; 3]) -> f64 {
    (0..3).map(|i| r.q[i] * z[i] * z[i] + r.l[i] * z[i]).sum()
}

/// Constraint `index` of the combined list as `(a, b)` with `a . z >= b`.
fn constraint(r: &Random, index: usize) -> ([f64; 3], f64) {
    let m = r.rows.len();
    if index < m {
        r.rows[index]
    } else if index < m + 3 {
        let mut a = [0.0; 3];
        a[index - m] = 1.0;
        (a, r.bounds[index - m].0)
    } else {
        let mut a = [0.0; 3];
        a[index - m - 3] = -1.0;
        (a, -r.bounds[index - m - 3].1)
    }
}

/// Stationarity, dual, complementarity and primal residuals, with
/// multipliers fitted by least squares on the active constraints.
fn kkt(r: &Random, z: &[f64], active: &[usize]) -> f64 {
    let grad = DVector::from_fn(3, |i, _| 2.0 * r.q[i] * z[i] + r.l[i]);
    let dot = |a: &[f64; 3]| a[0] * z[0] + a[1] * z[1] + a[2] * z[2];
    let mut res: f64 = 0.0;
    if !active.is_empty() {
        let a = DMatrix::from_fn(3, active.len(), |i, j| constraint(r, active[j]).0[i]);
        let mu = a.clone().svd(true, true).solve(&grad, 1e-14).unwrap();
        res = res.max((&a * &mu - &grad).amax());
        res = res.max(mu.iter().map(|m| -m).fold(0.0, f64::max));
        for (j, &c) in active.iter().enumerate() {
            let (ac, bc) = constraint(r, c);
            res = res.max((mu[j] * (dot(&ac) - bc)).abs());
        }
    } else {
        res = grad.amax();
    }
    for c in 0..r.rows.len() + 6 {
        let (ac, bc) = constraint(r, c);
        res = res.max(bc - dot(&ac));
    }
    res
}

/// Best objective over grid points satisfying every row. For each `(z0, z1)`
/// the feasible `z2` indices form an interval, and the convex 1-D objective
/// is minimised at the grid neighbour of its vertex clamped to it.
fn grid_oracle(r: &Random) -> Option<f64> {
    let axis = |k: usize| -> Vec<f64> {
        let (lo, hi) = r.bounds[k];
        (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect()
    };
    let (g0, g1, g2) = (axis(0), axis(1), axis(2));
    let step = g2[1] - g2[0];
    let feasible = |z: &[f64; 3]| r.rows.iter().all(|(a, b)| a[0] * z[0] + a[1] * z[1] + a[2] * z[2] >= *b);
    let vertex = -r.l[2] / (2.0 * r.q[2]);
    let mut best: Option<f64> = None;
    for &z0 in &g0 {
        for &z1 in &g1 {
            let (mut lo, mut hi) = (0i64, GRID as i64 - 1);
            for (a, b) in &r.rows {
                let rest = b - a[0] * z0 - a[1] * z1;
                if a[2] > 0.0 {
                    lo = lo.max(((rest / a[2] - g2[0]) / step).ceil() as i64 - 1);
                } else if a[2] < 0.0 {
                    hi = hi.min(((rest / a[2] - g2[0]) / step).floor() as i64 + 1);
                } else if rest > 0.0 {
                    lo = GRID as i64;
                }
            }
            lo = lo.max(0);
            hi = hi.min(GRID as i64 - 1);
            // the interval was widened by one index each side; tighten exactly
            while lo <= hi && !feasible(&[z0, z1, g2[lo as usize]]) {
                lo += 1;
            }
            while hi >= lo && !feasible(&[z0, z1, g2[hi as usize]]) {
                hi -= 1;
            }
            if lo > hi {
                continue;
            }
            let v = ((vertex - g2[0]) / step).floor() as i64;
            for k in [v, v + 1] {
                let k = k.clamp(lo, hi) as usize;
                let z = [z0, z1, g2[k]];
                let f = objective(r, &z);
                if best.is_none_or(|b| f < b) {
                    best = Some(f);
                }
            }
        }
    }
    best
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9b);
    let (mut worst_kkt, mut worst_gap, mut failures) = (0.0f64, f64::NEG_INFINITY, 0);
    for _ in 0..PROBLEMS {
        let r = draw(&mut rng);
        let problem = QpProblem::new(
            r.q.to_vec(),
            r.l.to_vec(),
            r.rows.iter().map(|(a, b)| QpRow::new(a.to_vec(), *b)).collect(),
            r.bounds.to_vec(),
        )
        .unwrap();
        let sol = solve(&problem);
        if sol.status != QpStatus::Optimal {
            failures += 1;
            continue;
        }
        let residual = kkt(&r, &sol.z, &sol.active_set);
        worst_kkt = worst_kkt.max(residual);
        let z = [sol.z[0], sol.z[1], sol.z[2]];
        if let Some(best) = grid_oracle(&r) {
            worst_gap = worst_gap.max(objective(&r, &z) - best);
        }
        if residual > 1e-8 {
            failures += 1;
        }
    }
    let gap_ok = worst_gap <= 1e-9;
    Outcome::new(
        failures == 0 && gap_ok,
        format!(
            "{PROBLEMS} problems, {failures} not optimal or over tolerance, max KKT residual {worst_kkt:.2e} (limit 1e-8), \
             max objective minus grid best {worst_gap:.2e} (must be <= 0)"
        ),
    )
}
