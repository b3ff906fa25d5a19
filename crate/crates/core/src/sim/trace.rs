//! Per-tick trace and its CSV form.

use std::io::Write;
use std::path::Path;

use crate::error::SimError;

/// Column order of the trace CSV.
pub const COLUMNS: [&str; 21] = [
    "t",
    "px",
    "py",
    "ptheta",
    "ex",
    "ey",
    "est_x",
    "est_y",
    "est_vx",
    "est_vy",
    "est_valid",
    "v",
    "omega",
    "delta",
    "h",
    "obstacle_dist",
    "visible",
    "planner_active",
    "plan_injected",
    "qp_kkt",
    "wall_time",
];

/// State and outputs at one control tick. The control is the one applied
/// from `t` to `t + dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub pursuer: [f64; 3],
    pub evader: [f64; 2],
    pub estimate: [f64; 4],
    pub estimate_valid: bool,
    pub control: [f64; 2],
    pub delta: f64,
    /// Visibility barrier of the true evader position.
    pub h: f64,
    pub obstacle_dist: f64,
    pub visible: bool,
    pub planner_active: bool,
    /// A new plan was swapped in this tick.
    pub plan_injected: bool,
    pub qp_kkt: f64,
    /// Seconds spent computing the tick; 0 in deterministic mode.
    pub wall_time: f64,
}

impl TraceRow {
    fn fields(&self) -> [f64; 21] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            self.t,
            self.pursuer[0],
            self.pursuer[1],
            self.pursuer[2],
            self.evader[0],
            self.evader[1],
            self.estimate[0],
            self.estimate[1],
            self.estimate[2],
            self.estimate[3],
            b(self.estimate_valid),
            self.control[0],
            self.control[1],
            self.delta,
            self.h,
            self.obstacle_dist,
            b(self.visible),
            b(self.planner_active),
            b(self.plan_injected),
            self.qp_kkt,
            self.wall_time,
        ]
    }

    fn from_fields(f: &[f64]) -> Self {
        Self {
            t: f[0],
            pursuer: [f[1], f[2], f[3]],
            evader: [f[4], f[5]],
            estimate: [f[6], f[7], f[8], f[9]],
            estimate_valid: f[10] != 0.0,
            control: [f[11], f[12]],
            delta: f[13],
            h: f[14],
            obstacle_dist: f[15],
            visible: f[16] != 0.0,
            planner_active: f[17] != 0.0,
            plan_injected: f[18] != 0.0,
            qp_kkt: f[19],
            wall_time: f[20],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV text: header plus one line per row. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.fields().iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| SimError::TraceParse("missing header".into()))?;
        if header != COLUMNS.join(",") {
            return Err(SimError::TraceParse(format!("unexpected header `{header}`")));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| SimError::TraceParse(format!("line {}: {e}", n + 2)))?;
            if f.len() != COLUMNS.len() {
                return Err(SimError::TraceParse(format!(
                    "line {}: {} fields, expected {}",
                    n + 2,
                    f.len(),
                    COLUMNS.len()
                )));
            }
            rows.push(TraceRow::from_fields(&f));
        }
        Ok(Self { rows })
    }
}

pub fn dump_trace(trace: &Trace, path: &Path) -> Result<(), SimError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trace.to_csv().as_bytes())?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Trace, SimError> {
    Trace::from_csv(&std::fs::read_to_string(path)?)
}
