//! Whole-loop criteria: invariance, safety, ablation trend, determinism.

use std::sync::Arc;

use pursuit_core::agents::pursuer_step;
use pursuit_core::cbf::{visibility_barrier, visibility_value};
use pursuit_core::controller::control_step;
use pursuit_core::sim::run_on;
use pursuit_core::{Barriers, ControlInput, EvaderModel, Mode, Point, ScenarioConfig};

use crate::common::{bundled, median, scenario};
use crate::Outcome;

/// Zero reference input on the open map with a motionless evader.
fn zero_reference_loop(cfg: &ScenarioConfig) -> (f64, f64) {
    let grid = cfg.build_map().unwrap();
    let EvaderModel::External { start, .. } = cfg.evader else {
        panic!("open_static has an external evader");
    };
    let y = Point::new(start[0], start[1]);
    let scheme = cfg.cbf.scheme();
    let mut x = cfg.start_state();
    let (mut min_h, mut max_delta) = (f64::INFINITY, 0.0f64);
    for _ in 0..cfg.n_ticks() {
        min_h = min_h.min(visibility_value(&grid, &x, y, &cfg.fov).unwrap());
        let barriers = Barriers {
            visibility: Some(visibility_barrier(&grid, &x, y, Point::zeros(), &cfg.fov, &scheme).unwrap()),
            safety: None,
        };
        let out = control_step(&x, ControlInput::ZERO, &barriers, &cfg.controller).unwrap();
        max_delta = max_delta.max(out.delta.abs());
        x = pursuer_step(&x, &out.u, cfg.dt());
    }
    (min_h, max_delta)
}

pub fn invariance() -> Outcome {
    let cfg = scenario("open_static.toml", &[]);
    let floor = -2.0 * cfg.build_map().unwrap().resolution();
    let (min_h, max_delta) = zero_reference_loop(&cfg);
    // the same scene with the pursuit reference filtered by the simulator
    let (trace, _) = run_on(&cfg, Arc::new(cfg.build_map().unwrap())).unwrap();
    let sim_min_h = trace.rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
    let sim_max_delta = trace.rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max);
    Outcome::new(
        min_h >= floor && max_delta == 0.0 && sim_min_h >= floor,
        format!(
            "{} ticks at {} Hz: zero reference min h {min_h:.4}, max |delta| {max_delta:e}; \
             pursuit reference min h {sim_min_h:.4}, max |delta| {sim_max_delta:.2e} (floor {floor})",
            cfg.n_ticks(),
            cfg.control_rate
        ),
    )
}

pub fn safety() -> Outcome {
    let names = bundled();
    let mut lines = Vec::new();
    let mut pass = names.len() >= 6 && names.iter().any(|n| n == "desk_pillars.toml");
    for name in &names {
        let base = scenario(name, &[]);
        let grid = Arc::new(base.build_map().unwrap());
        let floor = base.controller.robot_radius - 2.0 * grid.resolution();
        for mode in [Mode::ControllerOnly, Mode::Full] {
            let mut cfg = base.clone();
            cfg.mode = mode;
            let (_, m) = run_on(&cfg, grid.clone()).unwrap();
            let ok = m.n_collisions == 0 && m.min_obstacle_dist >= floor;
            pass &= ok;
            if !ok {
                lines.push(format!(
                    "{name} {mode}: {} collisions, min distance {:.3} < {floor:.3}",
                    m.n_collisions, m.min_obstacle_dist
                ));
            } else {
                lines.push(format!("{name} {mode} {:.3}", m.min_obstacle_dist));
            }
        }
    }
    Outcome::new(
        pass,
        format!("{} scenarios x 2 controller modes; min distance per run: {}", names.len(), lines.join(", ")),
    )
}

pub fn ablation() -> Outcome {
    let base = scenario("desk_pillars.toml", &[]);
    let grid = Arc::new(base.build_map().unwrap());
    let mut medians = Vec::new();
    for mode in Mode::ALL {
        let pcts: Vec<f64> = (1..=10u64)
            .map(|seed| {
                let mut cfg = base.clone();
                cfg.mode = mode;
                cfg.seed = seed;
                run_on(&cfg, grid.clone()).unwrap().1.pct_time_in_fov
            })
            .collect();
        medians.push(median(&pcts));
    }
    let [planner, controller, full] = [medians[0], medians[1], medians[2]];
    let pass = full >= controller && controller >= planner + 15.0 && full >= planner + 15.0 && full >= 90.0;
    Outcome::new(
        pass,
        format!(
            "median % time in FoV over 10 seeds: full {full:.1}, controller only {controller:.1}, planner only {planner:.1}"
        ),
    )
}

pub fn determinism() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, mode) in [
        ("desk_pillars.toml", Mode::Full),
        ("desk_pillars.toml", Mode::PlannerOnly),
        ("corridor.toml", Mode::Full),
    ] {
        let mut cfg = scenario(name, &[]);
        cfg.mode = mode;
        cfg.deterministic = true;
        let grid = Arc::new(cfg.build_map().unwrap());
        let a = run_on(&cfg, grid.clone()).unwrap().0.to_csv();
        let b = run_on(&cfg, grid).unwrap().0.to_csv();
        pass &= a == b;
        details.push(format!("{name} {mode} {}", if a == b { "identical" } else { "DIFFERENT" }));
    }
    Outcome::new(pass, format!("two runs each: {}", details.join(", ")))
}
