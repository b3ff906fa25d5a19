//! Pursuit of a moving evader under occlusion.
//!
//! A differential-drive pursuer keeps an evader inside its occluded field of
//! view by solving a small QP each tick. The QP carries a non-smooth
//! visibility barrier (negated signed distance from the evader to the FoV
//! polygon) and a point-cloud safety barrier. An SST planner supplies
//! non-myopic reference controls.

pub mod agents;
pub mod cbf;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod fov;
pub mod planner;
pub mod qp;
pub mod sim;
pub mod world;

/// World-frame 2D point or vector, metres.
pub type Point = nalgebra::Vector2<f64>;

pub use agents::{ControlInput, EvaderModel, EvaderState, LissajousParams, PursuerState};
pub use cbf::{GradientSet, PerturbationScheme};
pub use controller::{Barriers, ControlOutput, ControllerConfig, InputBox, PursuitGains};
pub use error::{CbfError, ConfigError, ControlError, EstimatorError, MapError, PlanError, QpError, SimError};
pub use estimator::{EstimatorConfig, EvaderEstimate};
pub use fov::{FovParams, FovPolygon};
pub use planner::{ReferenceTrajectory, SstParams};
pub use qp::{QpProblem, QpSolution};
pub use sim::{run, Mode, MetricsReport, ScenarioConfig, Simulation, Trace, TraceRow};
pub use world::{MapSpec, OccupancyGrid, PointCloud};
