//! Empirical Lipschitz bound of the visibility barrier in (t, x) on the
//! desk pillar preset:
//! `|h1 - h2| <= k |t1 - t2| + C |x1 - x2| + 2 res` with `C = range + 2`.

use pursuit_core::agents::lissajous_state;
use pursuit_core::cbf::visibility_value;
use pursuit_core::fov::occluded_fov;
use pursuit_core::world::OccupancyGrid;
use pursuit_core::{EvaderModel, FovParams, Point, PursuerState, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::free_point;
use crate::Outcome;

const PAIRS: usize = 10_000;

/// True when the first or last FoV ray is blocked at one pose and clear at
/// the other. The occluded FoV is not continuous there: the edge ray's
/// length jumps from the occluder distance to the full range.
fn sector_edge_crosses_occluder(grid: &OccupancyGrid, x1: &PursuerState, x2: &PursuerState, fov: &FovParams) -> bool {
    let edges = |x: &PursuerState| {
        let poly = occluded_fov(grid, x, fov).unwrap();
        let blocked = |v: &Point| (v - poly.apex).norm() < fov.range - 1e-9;
        [blocked(&poly.vertices[0]), blocked(poly.vertices.last().unwrap())]
    };
    edges(x1) != edges(x2)
}

pub fn run() -> Outcome {
    let cfg = ScenarioConfig::from_toml_str(pursuit_core::sim::config::DESK_PILLARS, &[]).unwrap();
    let grid = cfg.build_map().unwrap();
    let EvaderModel::Lissajous(curve) = cfg.evader else {
        panic!("desk preset has a Lissajous evader");
    };
    let k = cfg.evader.speed_bound();
    let c_hat = 1.0 + cfg.fov.range + 1.0;
    let slack = 2.0 * grid.resolution();
    let radius = cfg.controller.robot_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(0x11b);

    let mut violations = 0;
    let mut at_edge_crossings = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst = String::new();
    let mut n = 0;
    while n < PAIRS {
        let t1 = rng.random_range(0.0..cfg.run_duration);
        let y1 = lissajous_state(t1, &curve).0;
        // half the pairs put the evader in or near the sensor footprint
        let p1 = if n % 2 == 0 {
            free_point(&mut rng, &grid, radius)
        } else {
            let r = rng.random_range(0.5..1.2 * cfg.fov.range);
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            y1 + Point::new(a.cos(), a.sin()) * r
        };
        if !grid.obstacle_distance(p1).is_ok_and(|d| d.distance >= radius) {
            continue;
        }
        let face = (y1 - p1).y.atan2((y1 - p1).x);
        let th1 = face + rng.random_range(-1.5..1.5) * cfg.fov.half_angle;
        let x1 = PursuerState::new(p1.x, p1.y, th1);
        let dx = [
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.1..0.1),
        ];
        let x2 = x1.perturbed(&dx);
        if !grid.is_free(x2.position()) {
            continue;
        }
        let t2 = t1 + rng.random_range(-0.25..0.25);
        let y2 = lissajous_state(t2, &curve).0;
        let h1 = visibility_value(&grid, &x1, y1, &cfg.fov).unwrap();
        let h2 = visibility_value(&grid, &x2, y2, &cfg.fov).unwrap();
        let dist = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
        let bound = k * (t1 - t2).abs() + c_hat * dist + slack;
        let lhs = (h1 - h2).abs();
        if lhs > bound {
            violations += 1;
        }
        if lhs > bound && sector_edge_crosses_occluder(&grid, &x1, &x2, &cfg.fov) {
            at_edge_crossings += 1;
        }
        let ratio = lhs / bound;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst = format!("{x1:?} dx {dx:?} t {t1:.3}->{t2:.3} |dh| {lhs:.3} bound {bound:.3}");
        }
        n += 1;
    }
    let mut detail = format!(
        "{PAIRS} pairs, k = {k:.3} m/s, C = {c_hat}, {violations} violations ({at_edge_crossings} where a sector edge ray changes between blocked and clear), \
         worst |dh|/bound {worst_ratio:.3}"
    );
    if violations > 0 {
        detail.push_str(&format!(" at {worst}"));
    }
    Outcome::new(violations == 0, detail)
}
