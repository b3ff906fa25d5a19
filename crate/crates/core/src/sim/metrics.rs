//! Run metrics computed from a trace.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::trace::Trace;

/// Reference values for the full system in the CARLA study.
pub mod reference {
    pub const FULL_PCT_IN_FOV: f64 = 98.0;
    pub const CONTROLLER_ONLY_PCT_IN_FOV: f64 = 97.0;
    pub const PLANNER_ONLY_PCT_IN_FOV: f64 = 59.0;
    pub const FULL_MEAN_SDF: f64 = -5.0;
    pub const FULL_MAX_RELOCATE: f64 = 4.6;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// First time the evader is in view; `None` if never.
    pub initialization_time: Option<f64>,
    pub pct_time_in_fov: f64,
    /// Mean signed distance from evader to FoV (negative while visible).
    pub mean_sdf: f64,
    pub max_relocate_time: f64,
    pub n_collisions: usize,
    pub min_obstacle_dist: f64,
    /// `None` when tick wall times were not recorded.
    pub mean_control_frequency: Option<f64>,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialise")
    }
}

/// Metrics over a trace. Visibility metrics use ticks with
/// `t >= assessment_start`; collisions and clearance use every tick.
pub fn compute_metrics(trace: &Trace, assessment_start: Option<f64>, robot_radius: f64) -> MetricsReport {
    let rows = &trace.rows;
    let initialization_time = rows.iter().find(|r| r.visible).map(|r| r.t);
    let start = assessment_start.or(initialization_time);
    let window: Vec<_> = match start {
        Some(s) => rows.iter().filter(|r| r.t >= s).collect(),
        None => Vec::new(),
    };

    let (pct_time_in_fov, mean_sdf) = if window.is_empty() {
        (0.0, f64::NAN)
    } else {
        let vis = window.iter().filter(|r| r.visible).count();
        let sdf = window.iter().map(|r| -r.h).sum::<f64>() / window.len() as f64;
        (100.0 * vis as f64 / window.len() as f64, sdf)
    };

    let dt = if rows.len() > 1 { rows[1].t - rows[0].t } else { 0.0 };
    let mut max_relocate_time: f64 = 0.0;
    let mut lost_at: Option<f64> = None;
    for r in &window {
        match (r.visible, lost_at) {
            (false, None) => lost_at = Some(r.t),
            (true, Some(t0)) => {
                max_relocate_time = max_relocate_time.max(r.t - t0);
                lost_at = None;
            }
            _ => {}
        }
    }
    if let (Some(t0), Some(last)) = (lost_at, window.last()) {
        max_relocate_time = max_relocate_time.max(last.t + dt - t0);
    }

    let mut n_collisions = 0;
    let mut inside = false;
    for r in rows {
        let hit = r.obstacle_dist < robot_radius;
        if hit && !inside {
            n_collisions += 1;
        }
        inside = hit;
    }
    let min_obstacle_dist = rows.iter().map(|r| r.obstacle_dist).fold(f64::INFINITY, f64::min);

    let wall: f64 = rows.iter().map(|r| r.wall_time).sum();
    let mean_control_frequency = if wall > 0.0 && !rows.is_empty() {
        Some(rows.len() as f64 / wall)
    } else {
        None
    };

    MetricsReport {
        initialization_time,
        pct_time_in_fov,
        mean_sdf,
        max_relocate_time,
        n_collisions,
        min_obstacle_dist,
        mean_control_frequency,
    }
}

pub const METRIC_LABELS: [&str; 7] = [
    "Initialization time (s)",
    "% of time in FoV",
    "Mean SDF (m)",
    "Max. relocate time (s)",
    "No. of Collisions",
    "Min. dist. to obstacles (m)",
    "Control Frequency (Hz)",
];

fn cells(m: &MetricsReport) -> [String; 7] {
    let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.p$}"));
    [
        opt(m.initialization_time, 2),
        format!("{:.1}", m.pct_time_in_fov),
        format!("{:.2}", m.mean_sdf),
        format!("{:.2}", m.max_relocate_time),
        m.n_collisions.to_string(),
        format!("{:.3}", m.min_obstacle_dist),
        opt(m.mean_control_frequency, 1),
    ]
}

/// Comparison table, one column per mode: aligned text and CSV.
pub fn ablation_table(results: &[(Mode, MetricsReport)]) -> (String, String) {
    let cols: Vec<[String; 7]> = results.iter().map(|(_, m)| cells(m)).collect();
    let label_w = METRIC_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = results
        .iter()
        .zip(&cols)
        .map(|((mode, _), c)| c.iter().map(String::len).max().unwrap_or(0).max(mode.label().len()))
        .collect();

    let mut text = String::new();
    let _ = write!(text, "{:<label_w$}", "Metric");
    for ((mode, _), w) in results.iter().zip(&col_w) {
        let _ = write!(text, "  {:>w$}", mode.label());
    }
    text.push('\n');
    let mut csv = String::from("metric");
    for (mode, _) in results {
        let _ = write!(csv, ",{mode}");
    }
    csv.push('\n');
    for (i, label) in METRIC_LABELS.iter().enumerate() {
        let _ = write!(text, "{label:<label_w$}");
        let _ = write!(csv, "{label}");
        for (c, w) in cols.iter().zip(&col_w) {
            let _ = write!(text, "  {:>w$}", c[i]);
            let _ = write!(csv, ",{}", c[i]);
        }
        text.push('\n');
        csv.push('\n');
    }
    (text, csv)
}
