use thiserror::Error;

/// Errors produced anywhere in the perception, energy, learning and planning stack.
#[derive(Error, Debug)]
pub enum Error {
    #[error("point depth {0} m is at or behind the camera plane")]
    NonPositiveDepth(f64),
    #[error("frame is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid box extents: x [{x_min}, {x_max}], y [{y_min}, {y_max}]")]
    InvalidExtents {
        x_min: i64,
        x_max: i64,
        y_min: i64,
        y_max: i64,
    },
    #[error("sensing interval must be positive, got {0} s")]
    ZeroInterval(f64),
    #[error("blade clearance {clearance} m exceeds propeller radius {radius} m")]
    BladeClearanceExceedsRadius { radius: f64, clearance: f64 },
    #[error("motor torque constant must be positive, got {0}")]
    ZeroTorqueConstant(f64),
    #[error("rotor speed profile is empty")]
    EmptyProfile,
    #[error("velocity {velocity} m/s needs rotor speed {omega:.1} rad/s above the {omega_max:.1} rad/s limit")]
    ExceedsMaxRotorSpeed {
        velocity: f64,
        omega: f64,
        omega_max: f64,
    },
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("design matrix is rank deficient ({distinct} distinct abscissae)")]
    DegenerateDesignMatrix { distinct: usize },
    #[error("duplicate depth {0} m in dataset request")]
    DuplicateDepth(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training loss became non-finite at epoch {0}")]
    DivergenceDetected(usize),
    #[error("velocity must be positive, got {0} m/s")]
    NonPositiveVelocity(f64),
    #[error("trajectory duration must be positive, got {0} s")]
    NonPositiveDuration(f64),
    #[error("time {t} s outside trajectory domain [0, {duration}]")]
    OutOfDomain { t: f64, duration: f64 },
    #[error("gate lost: no bounding box for {0} consecutive bins")]
    TrackingLost(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
