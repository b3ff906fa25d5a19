//! SST from a pose where a pillar hides the evader, one random scene per seed.

use pursuit_core::cbf::visibility_value;
use pursuit_core::planner::{goal_satisfied, plan, PlanLimits};
use pursuit_core::{Point, PursuerState, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const TRIALS: u64 = 50;

fn occluded_scene(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, grid: &pursuit_core::OccupancyGrid) -> (PursuerState, Point) {
    let lattice = [-15.0, -5.0, 5.0, 15.0];
    loop {
        let c = Point::new(lattice[rng.random_range(0..4)], lattice[rng.random_range(0..4)]);
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let u = Point::new(phi.cos(), phi.sin());
        let side = Point::new(-u.y, u.x) * rng.random_range(-0.3..0.3);
        let p = c - u * rng.random_range(2.5..6.0);
        let y = c + u * rng.random_range(1.5..3.0) + side;
        let x = PursuerState::new(p.x, p.y, phi + rng.random_range(-0.3..0.3));
        let clear = |q: Point| grid.obstacle_distance(q).is_ok_and(|d| d.distance >= cfg.controller.robot_radius);
        if clear(p) && grid.is_free(y) && visibility_value(grid, &x, y, &cfg.fov).is_ok_and(|h| h < 0.0) {
            return (x, y);
        }
    }
}

pub fn run() -> Outcome {
    let cfg = ScenarioConfig::from_toml_str(pursuit_core::sim::config::DESK_PILLARS, &[]).unwrap();
    let grid = cfg.build_map().unwrap();
    let params = cfg.planner;
    let limits = PlanLimits {
        u_box: cfg.controller.u_box,
        robot_radius: cfg.controller.robot_radius,
    };
    let mut scenes = ChaCha8Rng::seed_from_u64(0x55f);
    let mut successes = 0;
    for seed in 0..TRIALS {
        let (x0, y) = occluded_scene(&mut scenes, &cfg, &grid);
        let Ok(traj) = plan(&grid, &x0, y, &params, &cfg.fov, &limits, seed) else {
            continue;
        };
        let end = traj.end_state();
        let reached = goal_satisfied(&grid, &end, y, &cfg.fov, params.goal_margin, limits.robot_radius);
        let collision_free = traj.rollout(params.substep).iter().all(|s| {
            grid.obstacle_distance(s.position())
                .is_ok_and(|d| d.distance >= limits.robot_radius)
        });
        if reached && collision_free {
            successes += 1;
        }
    }
    let rate = 100.0 * successes as f64 / TRIALS as f64;
    Outcome::new(
        rate >= 80.0,
        format!(
            "{successes}/{TRIALS} occluded scenes solved within {} iterations ({rate:.0} %, need 80 %)",
            params.iterations
        ),
    )
}
