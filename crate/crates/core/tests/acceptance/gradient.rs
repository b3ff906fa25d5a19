//! Least-squares visibility gradient against central differences taken at
//! smaller, independent steps, and the non-smooth detector at pillar
//! shadows.

use pursuit_core::cbf::{visibility_gradient, visibility_value, StateVec};
use pursuit_core::world::OccupancyGrid;
use pursuit_core::{FovParams, Point, PursuerState, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::free_point;
use crate::Outcome;

const SMOOTH_CONFIGS: usize = 200;
const MAX_ATTEMPTS: usize = 50_000;

/// Central-difference gradient of `d* = -h` with steps `(e, e, e)`.
fn central(grid: &OccupancyGrid, x: &PursuerState, y: Point, fov: &FovParams, e: f64) -> Option<StateVec> {
    let mut g = StateVec::zeros();
    for k in 0..3 {
        let mut d = [0.0; 3];
        d[k] = e;
        let plus = visibility_value(grid, &x.perturbed(&d), y, fov).ok()?;
        d[k] = -e;
        let minus = visibility_value(grid, &x.perturbed(&d), y, fov).ok()?;
        g[k] = -(plus - minus) / (2.0 * e);
    }
    Some(g)
}

fn relative(a: &StateVec, b: &StateVec) -> f64 {
    (a - b).norm() / b.norm().max(1e-3)
}

fn smooth_fidelity(cfg: &ScenarioConfig, grid: &OccupancyGrid) -> (usize, usize, f64) {
    let scheme = cfg.cbf.scheme();
    let fov = &cfg.fov;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9ad);
    let (mut verified, mut attempts, mut worst) = (0, 0, 0.0f64);
    while verified < SMOOTH_CONFIGS && attempts < MAX_ATTEMPTS {
        attempts += 1;
        let p = free_point(&mut rng, grid, cfg.controller.robot_radius);
        let x = PursuerState::new(p.x, p.y, rng.random_range(-3.2..3.2));
        let r = rng.random_range(0.3..1.2 * fov.range);
        let a = x.theta + rng.random_range(-1.5..1.5) * fov.half_angle;
        let y = p + Point::new(a.cos(), a.sin()) * r;
        if !grid.is_free(y) {
            continue;
        }
        let Ok(set) = visibility_gradient(grid, &x, y, fov, &scheme) else {
            continue;
        };
        if !set.is_smooth() {
            continue;
        }
        // smooth across the probe neighbourhood: central differences at
        // steps spanning the probe size must agree, none of them equal to it
        let steps: Vec<Option<StateVec>> = [0.06, 0.03, 0.01].iter().map(|&e| central(grid, &x, y, fov, e)).collect();
        let [Some(coarse), Some(mid), Some(fine)] = [steps[0], steps[1], steps[2]] else {
            continue;
        };
        if relative(&coarse, &fine) > 2e-3 || relative(&mid, &fine) > 2e-3 {
            continue;
        }
        verified += 1;
        worst = worst.max(relative(&set.vertices[0], &fine));
    }
    (verified, attempts, worst)
}

/// Pursuer facing a pillar with the evader straight behind it: both shadow
/// edges are equidistant from the evader, so the distance has a kink.
fn shadow_configs(grid: &OccupancyGrid) -> Vec<(PursuerState, Point)> {
    let mut out = Vec::new();
    for &c in &[Point::new(-5.0, -5.0), Point::new(5.0, 5.0), Point::new(-15.0, 5.0), Point::new(15.0, -15.0)] {
        // the occupied cells' own centre, not the nominal lattice point
        let centre = pillar_centre(grid, c);
        for k in 0..6 {
            let phi = 0.3 + k as f64 * std::f64::consts::TAU / 6.0;
            let u = Point::new(phi.cos(), phi.sin());
            for standoff in [3.5, 5.0] {
                let p = centre - u * standoff;
                let y = centre + u * 2.5;
                // keep every probe pose on the map and clear of obstacles
                let inside = grid.obstacle_distance(p).is_ok_and(|d| d.distance >= 0.5);
                let (lo, hi) = grid.bounds();
                let margin = p.x - lo.x > 0.5 && hi.x - p.x > 0.5 && p.y - lo.y > 0.5 && hi.y - p.y > 0.5;
                if inside && margin {
                    out.push((PursuerState::new(p.x, p.y, phi), y));
                }
            }
        }
    }
    out
}

fn pillar_centre(grid: &OccupancyGrid, near: Point) -> Point {
    let (mut sum, mut n) = (Point::zeros(), 0.0);
    for j in 0..grid.height() {
        for i in 0..grid.width() {
            let c = grid.cell_to_world(i, j);
            if grid.is_occupied(i, j) && (c - near).norm() < 2.0 {
                sum += c;
                n += 1.0;
            }
        }
    }
    sum / n
}

pub fn run() -> Outcome {
    let cfg = ScenarioConfig::from_toml_str(pursuit_core::sim::config::DESK_PILLARS, &[]).unwrap();
    let grid = cfg.build_map().unwrap();
    let (verified, attempts, worst) = smooth_fidelity(&cfg, &grid);

    let scheme = cfg.cbf.scheme();
    let configs = shadow_configs(&grid);
    let mut fired = 0;
    let mut hidden = 0;
    let mut min_vertices = usize::MAX;
    for (x, y) in &configs {
        if visibility_value(&grid, x, *y, &cfg.fov).unwrap() < 0.0 {
            hidden += 1;
        }
        let set = visibility_gradient(&grid, x, *y, &cfg.fov, &scheme).unwrap();
        min_vertices = min_vertices.min(set.vertices.len());
        if !set.is_smooth() && set.vertices.len() >= 2 {
            fired += 1;
        }
    }
    let pass = verified == SMOOTH_CONFIGS && worst <= 1e-2 && fired == configs.len() && hidden == configs.len();
    Outcome::new(
        pass,
        format!(
            "{verified} verified-smooth configurations ({attempts} drawn), worst relative error {worst:.2e} (limit 1e-2); \
             detector fired at {fired}/{} shadow configurations (evader hidden at {hidden}), min {min_vertices} vertices",
            configs.len()
        ),
    )
}
