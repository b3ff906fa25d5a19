//! Stable Sparse RRT over unicycle controls.
//!
//! The tree grows by picking the cheapest active node near a random state
//! sample, applying a random control from `U` for a random duration, and
//! keeping the result only if it is the cheapest node in its witness
//! neighbourhood. Planning stops at the first node from which the evader's
//! current position is visible with margin.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{pursuer_step, wrap_angle, ControlInput, PursuerState};
use crate::cbf::visibility_value;
use crate::controller::InputBox;
use crate::error::PlanError;
use crate::fov::FovParams;
use crate::world::OccupancyGrid;
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SstParams {
    /// Iteration cap; the only budget in deterministic runs.
    pub iterations: usize,
    /// Optional wall-clock cap in seconds.
    #[serde(default)]
    pub time_limit: Option<f64>,
    pub delta_bn: f64,
    pub delta_s: f64,
    pub duration_range: [f64; 2],
    pub goal_margin: f64,
    pub goal_bias: f64,
    pub substep: f64,
    /// Metres per radian in the selection/pruning metric.
    pub w_theta: f64,
}

impl Default for SstParams {
    fn default() -> Self {
        Self {
            iterations: 4000,
            time_limit: None,
            delta_bn: 2.0,
            delta_s: 0.5,
            duration_range: [0.2, 1.0],
            goal_margin: 0.2,
            goal_bias: 0.1,
            substep: 0.05,
            w_theta: 0.5,
        }
    }
}

impl SstParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(0.0 < self.delta_s && self.delta_s < self.delta_bn) {
            return Err(PlanError::Params("need 0 < delta_s < delta_bn".into()));
        }
        if !(self.duration_range[0] > 0.0 && self.duration_range[0] <= self.duration_range[1]) {
            return Err(PlanError::Params("need 0 < t_min <= t_max".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(PlanError::Params("goal_bias must be in [0, 1]".into()));
        }
        if !(self.substep > 0.0) {
            return Err(PlanError::Params("substep must be positive".into()));
        }
        Ok(())
    }
}

/// Vehicle limits the planner must respect.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanLimits {
    pub u_box: InputBox,
    pub robot_radius: f64,
}

/// Piecewise-constant open-loop control.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub start_state: PursuerState,
    pub segments: Vec<(ControlInput, f64)>,
    pub total_duration: f64,
}

impl ReferenceTrajectory {
    pub fn empty(start: PursuerState) -> Self {
        Self {
            start_state: start,
            segments: Vec::new(),
            total_duration: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Control in force `tau` seconds after the start, `None` once exhausted.
    pub fn control_at(&self, tau: f64) -> Option<ControlInput> {
        let mut acc = 0.0;
        for (u, d) in &self.segments {
            acc += d;
            if tau < acc {
                return Some(*u);
            }
        }
        None
    }

    /// End time of the segment in force at `tau`.
    pub fn segment_end(&self, tau: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (_, d) in &self.segments {
            acc += d;
            if tau < acc {
                return Some(acc);
            }
        }
        None
    }

    /// Re-execute from the start state at `substep` resolution.
    pub fn rollout(&self, substep: f64) -> Vec<PursuerState> {
        let mut out = vec![self.start_state];
        let mut x = self.start_state;
        for (u, d) in &self.segments {
            let states = propagate(&x, u, *d, substep);
            x = *states.last().unwrap_or(&x);
            out.extend(states);
        }
        out
    }

    /// Final state of the open-loop rollout.
    pub fn end_state(&self) -> PursuerState {
        self.segments
            .iter()
            .fold(self.start_state, |x, (u, d)| pursuer_step(&x, u, *d))
    }
}

/// Integrate `u` for `duration` in equal substeps no longer than `substep`;
/// returns every intermediate state, the final one included.
pub fn propagate(x: &PursuerState, u: &ControlInput, duration: f64, substep: f64) -> Vec<PursuerState> {
    let n = (duration / substep).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut s = *x;
    for _ in 0..n {
        s = pursuer_step(&s, u, h);
        out.push(s);
    }
    out
}

fn collision_free(grid: &OccupancyGrid, x: &PursuerState, radius: f64) -> bool {
    grid.is_free(x.position())
        && grid
            .obstacle_distance(x.position())
            .is_ok_and(|d| d.distance >= radius)
}

/// The evader's current position is visible with `goal_margin` and the
/// state keeps `robot_radius` clearance.
pub fn goal_satisfied(
    grid: &OccupancyGrid,
    x: &PursuerState,
    y_now: Point,
    fov: &FovParams,
    goal_margin: f64,
    robot_radius: f64,
) -> bool {
    // h >= margin >= 0 implies y is in the unoccluded sector
    let rel = y_now - x.position();
    let dist = rel.norm();
    if goal_margin >= 0.0 && dist > 0.0 {
        if dist > fov.range {
            return false;
        }
        if wrap_angle(rel.y.atan2(rel.x) - x.theta).abs() > fov.half_angle {
            return false;
        }
    }
    if !collision_free(grid, x, robot_radius) {
        return false;
    }
    visibility_value(grid, x, y_now, fov).is_ok_and(|h| h >= goal_margin)
}

/// Source of state samples for tree selection.
pub trait StateSampler {
    fn sample(&mut self, rng: &mut ChaCha8Rng, grid: &OccupancyGrid, y_now: Point) -> PursuerState;
}

/// Uniform over free space, or with probability `goal_bias` within sensor
/// range of the evader, facing it.
#[derive(Clone, Copy, Debug)]
pub struct GoalBiasedSampler {
    pub goal_bias: f64,
    pub fov: FovParams,
}

impl StateSampler for GoalBiasedSampler {
    fn sample(&mut self, rng: &mut ChaCha8Rng, grid: &OccupancyGrid, y_now: Point) -> PursuerState {
        let (lo, hi) = grid.bounds();
        for _ in 0..64 {
            let s = if rng.random::<f64>() < self.goal_bias {
                let r = self.fov.range * rng.random::<f64>().sqrt();
                let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let p = y_now + Point::new(a.cos(), a.sin()) * r;
                let face = (y_now - p).y.atan2((y_now - p).x);
                let th = face + rng.random_range(-self.fov.half_angle..=self.fov.half_angle);
                PursuerState::new(p.x, p.y, th)
            } else {
                PursuerState::new(
                    rng.random_range(lo.x..hi.x),
                    rng.random_range(lo.y..hi.y),
                    rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            };
            if grid.is_free(s.position()) {
                return s;
            }
        }
        PursuerState::new(y_now.x, y_now.y, 0.0)
    }
}

struct Node {
    state: PursuerState,
    parent: Option<usize>,
    control: ControlInput,
    duration: f64,
    cost: f64,
    active: bool,
}

struct Witness {
    point: PursuerState,
    rep: Option<usize>,
}

/// Search statistics and the sparse tree, kept for inspection.
#[derive(Clone, Debug, Default)]
pub struct PlanStats {
    pub iterations: usize,
    pub nodes: usize,
    pub witnesses: Vec<PursuerState>,
}

fn metric(a: &PursuerState, b: &PursuerState, w_theta: f64) -> f64 {
    (a.position() - b.position()).norm() + w_theta * wrap_angle(a.theta - b.theta).abs()
}

/// Plan with the default goal-biased sampler.
pub fn plan(
    grid: &OccupancyGrid,
    x0: &PursuerState,
    y_now: Point,
    params: &SstParams,
    fov: &FovParams,
    limits: &PlanLimits,
    seed: u64,
) -> Result<ReferenceTrajectory, PlanError> {
    let mut sampler = GoalBiasedSampler {
        goal_bias: params.goal_bias,
        fov: *fov,
    };
    plan_with(grid, x0, y_now, params, fov, limits, seed, &mut sampler).map(|(t, _)| t)
}

#[allow(clippy::too_many_arguments)]
pub fn plan_with<S: StateSampler + ?Sized>(
    grid: &OccupancyGrid,
    x0: &PursuerState,
    y_now: Point,
    params: &SstParams,
    fov: &FovParams,
    limits: &PlanLimits,
    seed: u64,
    sampler: &mut S,
) -> Result<(ReferenceTrajectory, PlanStats), PlanError> {
    params.validate()?;
    if !collision_free(grid, x0, limits.robot_radius) {
        return Err(PlanError::StartInCollision);
    }
    if goal_satisfied(grid, x0, y_now, fov, params.goal_margin, limits.robot_radius) {
        return Ok((ReferenceTrajectory::empty(*x0), PlanStats::default()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    let mut nodes = vec![Node {
        state: *x0,
        parent: None,
        control: ControlInput::ZERO,
        duration: 0.0,
        cost: 0.0,
        active: true,
    }];
    let mut witnesses = vec![Witness {
        point: *x0,
        rep: Some(0),
    }];
    let ub = limits.u_box;
    for it in 0..params.iterations {
        if let Some(limit) = params.time_limit {
            if started.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        let sample = sampler.sample(&mut rng, grid, y_now);

        // best-near selection, falling back to the nearest active node
        let mut best: Option<(f64, usize)> = None;
        let mut nearest: Option<(f64, usize)> = None;
        for (i, n) in nodes.iter().enumerate().filter(|(_, n)| n.active) {
            let d = metric(&n.state, &sample, params.w_theta);
            if d <= params.delta_bn && best.is_none_or(|(c, _)| n.cost < c) {
                best = Some((n.cost, i));
            }
            if nearest.is_none_or(|(nd, _)| d < nd) {
                nearest = Some((d, i));
            }
        }
        let Some((_, sel)) = best.or(nearest) else {
            break;
        };

        let u = ControlInput::new(
            sample_range(&mut rng, ub.v[0], ub.v[1]),
            sample_range(&mut rng, ub.omega[0], ub.omega[1]),
        );
        let dur = sample_range(&mut rng, params.duration_range[0], params.duration_range[1]);
        let states = propagate(&nodes[sel].state, &u, dur, params.substep);
        if !states.iter().all(|s| collision_free(grid, s, limits.robot_radius)) {
            continue;
        }
        let x_new = *states.last().unwrap();
        let cost = nodes[sel].cost + dur;
        let reached = goal_satisfied(grid, &x_new, y_now, fov, params.goal_margin, limits.robot_radius);

        let (wd, wi) = witnesses
            .iter()
            .enumerate()
            .map(|(i, w)| (metric(&w.point, &x_new, params.w_theta), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least the root witness");
        let wi = if wd > params.delta_s {
            witnesses.push(Witness {
                point: x_new,
                rep: None,
            });
            witnesses.len() - 1
        } else {
            wi
        };
        let peer = witnesses[wi].rep;
        let dominates = peer.is_none_or(|p| cost < nodes[p].cost);
        if !dominates && !reached {
            continue;
        }
        if dominates {
            if let Some(p) = peer {
                nodes[p].active = false;
            }
        }
        nodes.push(Node {
            state: x_new,
            parent: Some(sel),
            control: u,
            duration: dur,
            cost,
            active: dominates,
        });
        let id = nodes.len() - 1;
        if dominates {
            witnesses[wi].rep = Some(id);
        }
        if reached {
            let mut segments = Vec::new();
            let mut cur = id;
            while let Some(parent) = nodes[cur].parent {
                segments.push((nodes[cur].control, nodes[cur].duration));
                cur = parent;
            }
            segments.reverse();
            let total_duration = segments.iter().map(|(_, d)| d).sum();
            let stats = PlanStats {
                iterations: it + 1,
                nodes: nodes.len(),
                witnesses: witnesses.iter().map(|w| w.point).collect(),
            };
            return Ok((
                ReferenceTrajectory {
                    start_state: *x0,
                    segments,
                    total_duration,
                },
                stats,
            ));
        }
    }
    Err(PlanError::BudgetExhausted {
        iterations: params.iterations,
    })
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Immutable planning snapshot sent to the background worker.
#[derive(Clone, Debug)]
pub struct PlanJob {
    pub id: u64,
    pub grid: Arc<OccupancyGrid>,
    pub x0: PursuerState,
    pub y_now: Point,
    pub params: SstParams,
    pub fov: FovParams,
    pub limits: PlanLimits,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PlanReply {
    pub id: u64,
    pub result: Result<ReferenceTrajectory, PlanError>,
}

/// Planner running on its own thread: snapshots in, trajectories out.
pub struct PlannerWorker {
    jobs: Option<Sender<PlanJob>>,
    replies: Receiver<PlanReply>,
    handle: Option<JoinHandle<()>>,
}

impl PlannerWorker {
    pub fn spawn() -> Self {
        let (job_tx, job_rx) = mpsc::channel::<PlanJob>();
        let (reply_tx, reply_rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name("sst-planner".into())
            .spawn(move || {
                for job in job_rx {
                    let result = plan(&job.grid, &job.x0, job.y_now, &job.params, &job.fov, &job.limits, job.seed);
                    if reply_tx.send(PlanReply { id: job.id, result }).is_err() {
                        break;
                    }
                }
            })
            .expect("spawn planner thread");
        Self {
            jobs: Some(job_tx),
            replies: reply_rx,
            handle: Some(handle),
        }
    }

    pub fn submit(&self, job: PlanJob) -> bool {
        self.jobs.as_ref().is_some_and(|tx| tx.send(job).is_ok())
    }

    pub fn try_recv(&self) -> Option<PlanReply> {
        self.replies.try_recv().ok()
    }

    pub fn recv(&self) -> Option<PlanReply> {
        self.replies.recv().ok()
    }
}

impl Drop for PlannerWorker {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
