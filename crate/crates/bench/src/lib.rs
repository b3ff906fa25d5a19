//! Benchmark fixtures. The core types are re-exported so benches depend on
//! this crate alone.

pub use pursuit_core::*;

use pursuit_core::cbf::{safety_cbf, visibility_barrier};
use pursuit_core::sim::config::DESK_PILLARS;

/// Desk preset with a pursuer pose that sees the evader past a pillar.
pub struct Fixture {
    pub cfg: ScenarioConfig,
    pub grid: OccupancyGrid,
    pub pose: PursuerState,
    pub evader: Point,
}

impl Fixture {
    pub fn desk() -> Self {
        let cfg = ScenarioConfig::from_toml_str(DESK_PILLARS, &[]).expect("desk preset parses");
        let grid = cfg.build_map().expect("desk map builds");
        Self {
            cfg,
            grid,
            pose: PursuerState::new(0.0, -2.0, 0.6),
            evader: Point::new(4.0, 1.5),
        }
    }

    /// Barriers at the fixture pose, as the controller sees them.
    pub fn barriers(&self) -> Barriers {
        let scheme = self.cfg.cbf.scheme();
        let cloud = self
            .grid
            .simulate_lidar(&self.pose, self.cfg.sensing.lidar_rays, self.cfg.sensing.lidar_range)
            .expect("fixture pose is free");
        Barriers {
            visibility: visibility_barrier(&self.grid, &self.pose, self.evader, Point::zeros(), &self.cfg.fov, &scheme).ok(),
            safety: safety_cbf(&cloud, &self.pose, self.cfg.sensing.n_nearest),
        }
    }
}

/// Occluded version of the fixture: the pillar at (5, 5) hides the evader.
pub fn occluded_start() -> (PursuerState, Point) {
    (PursuerState::new(5.0, 0.5, std::f64::consts::FRAC_PI_2), Point::new(5.0, 8.0))
}
