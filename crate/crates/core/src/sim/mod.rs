//! Closed-loop simulation at a fixed control rate.
//!
//! Each tick: sense (FoV, detection, scan), update the track, service the
//! planner, pick a reference, filter it through the CBF-QP, record, and
//! integrate both agents by one period.

pub mod config;
pub mod metrics;
pub mod trace;

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{evader_step, ControlInput, EvaderState, PursuerState};
use crate::cbf::{safety_cbf, visibility_gradient, visibility_time_term, PerturbationScheme};
use crate::controller::{control_step, fallback_reference, slide_direction, Barriers};
use crate::error::{CbfError, ConfigError, SimError};
use crate::estimator::{gate, EvaderEstimate, Tracker};
use crate::fov::{occluded_fov, FovPolygon};
use crate::planner::{plan, PlanJob, PlanLimits, PlannerWorker, ReferenceTrajectory};
use crate::world::{ObstacleDistance, OccupancyGrid, PointCloud};
use crate::Point;

pub use config::{CbfConfig, Mode, ReplanPolicy, ScenarioConfig, SensingConfig};
pub use metrics::{ablation_table, compute_metrics, MetricsReport};
pub use trace::{dump_trace, read_trace, Trace, TraceRow};

struct ActivePlan {
    traj: ReferenceTrajectory,
    start: f64,
}

/// A requested plan: swapped in at `swap_tick` once its result is known.
struct PendingPlan {
    id: u64,
    swap_tick: u64,
    result: Option<Result<ReferenceTrajectory, crate::error::PlanError>>,
}

/// Steppable simulation owning all mutable state.
pub struct Simulation {
    cfg: ScenarioConfig,
    grid: Arc<OccupancyGrid>,
    scheme: PerturbationScheme,
    mode: Mode,
    tick: u64,
    pursuer: PursuerState,
    evader: EvaderState,
    evader_cmd: Option<Point>,
    tracker: Tracker,
    noise: ChaCha8Rng,
    plan: Option<ActivePlan>,
    pending: Option<PendingPlan>,
    worker: Option<PlannerWorker>,
    plan_counter: u64,
    last_request: f64,
    next_request_ok: f64,
    lost_since: Option<f64>,
    poly: FovPolygon,
    trace: Trace,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let grid = Arc::new(cfg.build_map()?);
        Self::with_grid(cfg, grid)
    }

    /// Reuse an already built map.
    pub fn with_grid(cfg: ScenarioConfig, grid: Arc<OccupancyGrid>) -> Result<Self, SimError> {
        cfg.validate()?;
        let start = cfg.start_state();
        let clear = grid
            .obstacle_distance(start.position())
            .map(|d| d.distance >= cfg.controller.robot_radius)
            .unwrap_or(false);
        if !grid.is_free(start.position()) || !clear {
            return Err(ConfigError::Invalid(format!(
                "pursuer start ({}, {}) is in collision or off the map",
                start.x, start.y
            ))
            .into());
        }
        let evader = cfg.evader.initial();
        let mut tracker = Tracker::new(cfg.estimator, cfg.evader.speed_bound());
        if cfg.evader_cue {
            tracker.estimate = Some(EvaderEstimate::from_detection(
                evader.position,
                0.0,
                &cfg.estimator,
                cfg.evader.speed_bound(),
            ));
        }
        Ok(Self {
            scheme: cfg.cbf.scheme(),
            mode: cfg.mode,
            tick: 0,
            pursuer: start,
            evader,
            evader_cmd: None,
            tracker,
            noise: ChaCha8Rng::seed_from_u64(cfg.seed),
            plan: None,
            pending: None,
            worker: None,
            plan_counter: 0,
            last_request: f64::NEG_INFINITY,
            next_request_ok: 0.0,
            lost_since: None,
            poly: FovPolygon {
                apex: start.position(),
                vertices: Vec::new(),
            },
            trace: Trace::default(),
            grid,
            cfg,
        })
    }

    /// Back to `t = 0` with the same configuration and map.
    pub fn reset(&mut self) -> Result<(), SimError> {
        let mut cfg = self.cfg.clone();
        cfg.mode = self.mode;
        *self = Self::with_grid(cfg, self.grid.clone())?;
        Ok(())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if mode != self.mode {
            self.mode = mode;
            self.plan = None;
            self.pending = None;
        }
    }

    /// Latest velocity command for an external evader (last writer wins).
    pub fn set_evader_command(&mut self, v: Point) {
        self.evader_cmd = Some(v);
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt()
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn pursuer(&self) -> PursuerState {
        self.pursuer
    }

    pub fn evader(&self) -> EvaderState {
        self.evader
    }

    pub fn estimate(&self) -> Option<EvaderEstimate> {
        self.tracker.estimate
    }

    /// FoV polygon sensed on the last tick.
    pub fn fov_polygon(&self) -> &FovPolygon {
        &self.poly
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn metrics(&self) -> MetricsReport {
        compute_metrics(&self.trace, None, self.cfg.controller.robot_radius)
    }

    /// Poses along the active plan, from its start state.
    pub fn plan_path(&self) -> Vec<PursuerState> {
        self.plan
            .as_ref()
            .map(|p| p.traj.rollout(self.cfg.planner.substep))
            .unwrap_or_default()
    }

    fn plan_control(&self, t: f64) -> Option<ControlInput> {
        self.plan.as_ref().and_then(|p| p.traj.control_at(t - p.start))
    }

    fn sense(&self, x: &PursuerState) -> Result<(FovPolygon, PointCloud), SimError> {
        if !self.grid.is_free(x.position()) {
            // in collision: blind
            let blind = FovPolygon {
                apex: x.position(),
                vertices: Vec::new(),
            };
            return Ok((blind, PointCloud::default()));
        }
        let poly = occluded_fov(&self.grid, x, &self.cfg.fov)?;
        let cloud = if self.mode.uses_controller() {
            self.grid
                .simulate_lidar(x, self.cfg.sensing.lidar_rays, self.cfg.sensing.lidar_range)?
        } else {
            PointCloud::default()
        };
        Ok((poly, cloud))
    }

    /// Advance one control period and return the recorded row.
    pub fn step(&mut self) -> Result<TraceRow, SimError> {
        let started = Instant::now();
        let dt = self.cfg.dt();
        let t = self.time();
        let x = self.pursuer;
        let y = self.evader;

        let (poly, cloud) = self.sense(&x)?;
        let bd = poly.signed_distance(y.position);
        let visible = bd.distance <= 0.0;
        let detection = gate(&poly, y.position, self.cfg.estimator.r, &mut self.noise);
        let track_dt = if self.tick == 0 { 0.0 } else { dt };
        self.tracker.tick(t, track_dt, detection)?;
        if visible {
            self.lost_since = None;
        } else if self.lost_since.is_none() {
            self.lost_since = Some(t);
        }

        let injected = if self.mode.uses_planner() {
            self.service_planner(t, &x)?
        } else {
            false
        };

        let est = self.tracker.estimate;
        let target = est.map(|e| {
            let v = if e.valid { e.velocity() } else { Point::zeros() };
            (e.position(), v)
        });
        let cc = &self.cfg.controller;
        let od = self.grid.obstacle_distance(x.position()).ok();
        let fallback = || {
            target.map_or(ControlInput::ZERO, |(p, v)| {
                let desired = p + v * cc.gains.lookahead - x.position();
                let dir = match od {
                    Some(ObstacleDistance {
                        distance,
                        nearest: Some(q),
                    }) => slide_direction(
                        desired,
                        q - x.position(),
                        distance - cc.robot_radius,
                        cc.gains.obstacle_influence,
                    ),
                    _ => desired,
                };
                fallback_reference(&x, x.position() + dir, Point::zeros(), cc.standoff, &cc.gains, &cc.u_box)
            })
        };
        let plan_u = self.plan_control(t);
        let reference = match self.mode {
            Mode::PlannerOnly => plan_u.unwrap_or(ControlInput::ZERO),
            Mode::ControllerOnly => fallback(),
            Mode::Full => plan_u.unwrap_or_else(fallback),
        };

        let (u, delta, kkt) = if self.mode.uses_controller() {
            // no visibility row once the track is lost: the stale mean says
            // nothing about where the evader can be seen from
            let tracked = est.is_some_and(|e| e.valid);
            let visibility = match target.filter(|_| tracked) {
                Some((p, v)) => match visibility_gradient(&self.grid, &x, p, &self.cfg.fov, &self.scheme) {
                    Ok(set) => {
                        let mut set = set.negated();
                        set.time_term = -visibility_time_term(&poly, p, v);
                        Some(set)
                    }
                    // a perturbed pose left free space: no visibility row this tick
                    Err(CbfError::Map(_)) => None,
                    Err(e) => return Err(e.into()),
                },
                None => None,
            };
            let barriers = Barriers {
                visibility,
                safety: safety_cbf(&cloud, &x, self.cfg.sensing.n_nearest),
            };
            let out = control_step(&x, reference, &barriers, cc).map_err(|source| SimError::Controller { t, source })?;
            (out.u, out.delta, out.kkt_residual)
        } else {
            (cc.u_box.clamp(reference), 0.0, 0.0)
        };

        let obstacle_dist = od.map_or_else(|| self.grid.no_obstacle_distance(), |d| d.distance);
        let e = est.map(|e| e.mean).unwrap_or_default();
        let row = TraceRow {
            t,
            pursuer: x.to_array(),
            evader: [y.position.x, y.position.y],
            estimate: [e[0], e[1], e[2], e[3]],
            estimate_valid: est.is_some_and(|e| e.valid),
            control: [u.v, u.omega],
            delta,
            h: -bd.distance,
            obstacle_dist,
            visible,
            planner_active: plan_u.is_some(),
            plan_injected: injected,
            qp_kkt: kkt,
            wall_time: if self.cfg.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };
        self.trace.rows.push(row);
        self.poly = poly;

        self.pursuer = crate::agents::pursuer_step(&x, &u, dt);
        self.evader = evader_step(&self.cfg.evader, &y, t, dt, self.evader_cmd);
        self.tick += 1;
        Ok(row)
    }

    /// Collect finished plans, issue new requests and swap plans in.
    /// Returns whether a plan was swapped in this tick.
    fn service_planner(&mut self, t: f64, x: &PursuerState) -> Result<bool, SimError> {
        if let Some(worker) = &self.worker {
            while let Some(reply) = worker.try_recv() {
                if let Some(p) = self.pending.as_mut().filter(|p| p.id == reply.id) {
                    p.result = Some(reply.result);
                }
            }
        }

        if self.pending.is_none() && t >= self.next_request_ok - 1e-9 {
            let exhausted = self.plan_control(t).is_none();
            let periodic = t - self.last_request >= self.cfg.replan.period - 1e-9;
            let lost = self
                .lost_since
                .is_some_and(|s| t - s >= self.cfg.replan.lost_after - 1e-9);
            if exhausted || periodic || lost {
                self.request_plan(t, x)?;
            }
        }

        let ready = self
            .pending
            .as_ref()
            .is_some_and(|p| p.result.is_some() && self.tick >= p.swap_tick);
        if !ready {
            return Ok(false);
        }
        let pending = self.pending.take().expect("checked above");
        match pending.result.expect("checked above") {
            Ok(traj) if !traj.is_empty() => {
                self.plan = Some(ActivePlan { traj, start: t });
                Ok(true)
            }
            // evader already in view from the snapshot: nothing to track
            Ok(_) => {
                self.plan = None;
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    fn request_plan(&mut self, t: f64, x: &PursuerState) -> Result<(), SimError> {
        let Some(est) = self.tracker.estimate else {
            return Ok(());
        };
        let dt = self.cfg.dt();
        // swap at a tick no earlier than the latency and, while a plan is
        // running, at the end of its current segment
        let mut swap_t = t + self.cfg.replan.latency;
        if let Some(p) = &self.plan {
            if let Some(end) = p.traj.segment_end(swap_t - p.start) {
                swap_t = swap_t.max(p.start + end);
            }
        }
        let swap_tick = self.tick + ((swap_t - t) / dt - 1e-9).ceil().max(0.0) as u64;

        // predict the pursuer at the swap tick under the current plan
        let mut x0 = *x;
        for k in self.tick..swap_tick {
            let tk = k as f64 * dt;
            let u = self.plan_control(tk).unwrap_or(ControlInput::ZERO);
            x0 = crate::agents::pursuer_step(&x0, &self.cfg.controller.u_box.clamp(u), dt);
        }
        if !self.grid.is_free(x0.position()) {
            x0 = *x;
        }

        self.plan_counter += 1;
        let seed = self
            .cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.plan_counter);
        let limits = PlanLimits {
            u_box: self.cfg.controller.u_box,
            robot_radius: self.cfg.controller.robot_radius,
        };
        let mut params = self.cfg.planner;
        let id = self.plan_counter;
        if self.cfg.deterministic {
            params.time_limit = None;
            let result = plan(&self.grid, &x0, est.position(), &params, &self.cfg.fov, &limits, seed);
            self.pending = Some(PendingPlan {
                id,
                swap_tick,
                result: Some(result),
            });
        } else {
            let worker = self.worker.get_or_insert_with(PlannerWorker::spawn);
            let job = PlanJob {
                id,
                grid: self.grid.clone(),
                x0,
                y_now: est.position(),
                params,
                fov: self.cfg.fov,
                limits,
                seed,
            };
            if !worker.submit(job) {
                return Err(SimError::PlannerGone);
            }
            self.pending = Some(PendingPlan {
                id,
                swap_tick,
                result: None,
            });
        }
        self.last_request = t;
        self.next_request_ok = t + self.cfg.replan.cooldown;
        Ok(())
    }
}

/// Run a scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<(Trace, MetricsReport), SimError> {
    let mut sim = Simulation::new(cfg.clone())?;
    for _ in 0..cfg.n_ticks() {
        sim.step()?;
    }
    let metrics = sim.metrics();
    Ok((sim.into_trace(), metrics))
}

/// Run with an already built map (saves rebuilding across sweeps).
pub fn run_on(cfg: &ScenarioConfig, grid: Arc<OccupancyGrid>) -> Result<(Trace, MetricsReport), SimError> {
    let mut sim = Simulation::with_grid(cfg.clone(), grid)?;
    for _ in 0..cfg.n_ticks() {
        sim.step()?;
    }
    let metrics = sim.metrics();
    Ok((sim.into_trace(), metrics))
}
