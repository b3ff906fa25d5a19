//! FoV signed distance against dense boundary sampling, and obstacle
//! distance against an exhaustive per-cell computation.

use pursuit_core::fov::{fov_signed_distance, occluded_fov};
use pursuit_core::world::OccupancyGrid;
use pursuit_core::{FovParams, FovPolygon, Point, PursuerState, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::free_point;
use crate::Outcome;

const PAIRS: usize = 1000;
const SAMPLE_SPACING: f64 = 1e-3;

fn random_grid(rng: &mut ChaCha8Rng) -> OccupancyGrid {
    let res = [0.1, 0.25, 0.5][rng.random_range(0..3)];
    let (w, h) = (rng.random_range(16..48), rng.random_range(16..48));
    let fill = rng.random_range(0.02..0.25);
    let cells = (0..w * h).map(|_| rng.random::<f64>() < fill).collect();
    let origin = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    OccupancyGrid::new(res, origin, w, h, cells).unwrap()
}

fn ring(poly: &FovPolygon) -> Vec<Point> {
    std::iter::once(poly.apex).chain(poly.vertices.iter().copied()).collect()
}

/// Winding number of the closed ring around `q`.
fn winding(pts: &[Point], q: Point) -> i32 {
    let mut w = 0;
    for k in 0..pts.len() {
        let (a, b) = (pts[k], pts[(k + 1) % pts.len()]);
        let side = (b - a).perp(&(q - a));
        if a.y <= q.y {
            if b.y > q.y && side > 0.0 {
                w += 1;
            }
        } else if b.y <= q.y && side < 0.0 {
            w -= 1;
        }
    }
    w
}

fn sampled_signed_distance(poly: &FovPolygon, q: Point) -> f64 {
    let pts = ring(poly);
    let mut best = f64::INFINITY;
    for k in 0..pts.len() {
        let (a, b) = (pts[k], pts[(k + 1) % pts.len()]);
        let n = ((b - a).norm() / SAMPLE_SPACING).ceil().max(1.0) as usize;
        for s in 0..=n {
            let p = a + (b - a) * (s as f64 / n as f64);
            best = best.min((p - q).norm());
        }
    }
    if winding(&pts, q) != 0 {
        -best
    } else {
        best
    }
}

fn square_distance(p: Point, lo: Point, hi: Point) -> f64 {
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    dx.hypot(dy)
}

/// Distance to the nearest cell of the other kind, the region outside the
/// grid counting as free.
fn exhaustive_obstacle_distance(grid: &OccupancyGrid, p: Point) -> f64 {
    let res = grid.resolution();
    let o = grid.origin();
    let ci = (((p.x - o.x) / res).floor() as usize).min(grid.width() - 1);
    let cj = (((p.y - o.y) / res).floor() as usize).min(grid.height() - 1);
    let inside = grid.is_occupied(ci, cj);
    let mut best = f64::INFINITY;
    for j in 0..grid.height() {
        for i in 0..grid.width() {
            if grid.is_occupied(i, j) != inside {
                let lo = o + Point::new(i as f64 * res, j as f64 * res);
                best = best.min(square_distance(p, lo, lo.add_scalar(res)));
            }
        }
    }
    if inside {
        let (lo, hi) = grid.bounds();
        let edge = (p.x - lo.x).min(hi.x - p.x).min(p.y - lo.y).min(hi.y - p.y);
        -best.min(edge)
    } else if grid.occupied_count() == 0 {
        grid.no_obstacle_distance()
    } else {
        best
    }
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e0);
    let desk = ScenarioConfig::from_toml_str(pursuit_core::sim::config::DESK_PILLARS, &[])
        .unwrap()
        .build_map()
        .unwrap();
    let mut fov_err: f64 = 0.0;
    let mut obs_err: f64 = 0.0;
    let mut obs_checked = 0;
    for k in 0..PAIRS {
        let owned;
        let grid = if k % 4 == 0 {
            &desk
        } else {
            owned = random_grid(&mut rng);
            &owned
        };
        let apex = free_point(&mut rng, grid, 0.0);
        let pose = PursuerState::new(apex.x, apex.y, rng.random_range(-3.2..3.2));
        let params = FovParams::new(
            rng.random_range(1.0..8.0),
            rng.random_range(0.2..1.6),
            rng.random_range(16..129),
        );
        let poly = occluded_fov(grid, &pose, &params).unwrap();
        let reach = 1.3 * params.range;
        let q = apex + Point::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        fov_err = fov_err.max((fov_signed_distance(&poly, q) - sampled_signed_distance(&poly, q)).abs());

        // one uniform point and one just off a cell face
        let (lo, hi) = grid.bounds();
        let res = grid.resolution();
        let u = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        let face = Point::new(
            lo.x + (((u.x - lo.x) / res).round() * res + rng.random_range(-1e-6..1e-6)),
            u.y,
        );
        for p in [u, face] {
            if !grid.contains_point(p) {
                continue;
            }
            let got = grid.obstacle_distance(p).unwrap().distance;
            obs_err = obs_err.max((got - exhaustive_obstacle_distance(grid, p)).abs());
            obs_checked += 1;
        }
    }
    Outcome::new(
        fov_err <= 1e-3 && obs_err <= 1e-9,
        format!(
            "{PAIRS} polygon/point pairs, max fov error {fov_err:.2e} m (limit 1e-3); \
             {obs_checked} obstacle distances, max error {obs_err:.2e} m (limit 1e-9)"
        ),
    )
}
