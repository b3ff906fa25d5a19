use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("malformed map header: {0}")]
    Header(String),
    #[error("raster size mismatch: expected {expected}, found {found}")]
    RasterSize { expected: usize, found: usize },
    #[error("unexpected raster character {0:?}")]
    RasterChar(char),
    #[error("resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("point ({x}, {y}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies inside an obstacle")]
    InsideObstacle { x: f64, y: f64 },
    #[error("bad map generator `{0}`")]
    Generator(String),
    #[error("map i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbfError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("perturbation directions do not span the state space (rank {rank} < 3)")]
    RankDeficient { rank: usize },
    #[error("invalid perturbation scheme: {0}")]
    Scheme(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("objective is not strictly convex: weight {index} is {value}")]
    NonConvex { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("box bound {index} has lo {lo} > hi {hi}")]
    Box { index: usize, lo: f64, hi: f64 },
    #[error("too many constraint rows: {0} (limit 64)")]
    TooManyRows(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("empty gradient set for the {0} barrier")]
    EmptyGradient(&'static str),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("controller QP reported infeasible; this violates the slack construction")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("start state is in collision")]
    StartInCollision,
    #[error("planning budget exhausted after {iterations} iterations")]
    BudgetExhausted { iterations: usize },
    #[error("invalid planner parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("measurement is not finite")]
    NonFinite,
    #[error("measurement variance must be positive, got {0}")]
    Variance(f64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unsupported scenario schema {0} (expected 1)")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown override key `{0}`")]
    UnknownKey(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("controller contract violation at t = {t:.3} s: {source}")]
    Controller { t: f64, source: ControlError },
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace parse: {0}")]
    TraceParse(String),
    #[error("planner worker disconnected")]
    PlannerGone,
}
