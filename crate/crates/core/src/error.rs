use thiserror::Error;

#[derive(Debug, Error)]
pub enum SrbError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("derivative-order-unsupported: requested {requested}, coupling supports up to {supported}")]
    DerivativeOrderUnsupported { requested: usize, supported: usize },
    #[error("degenerate-frame: scale factor {value:e} at step {step}")]
    DegenerateFrame { step: usize, value: f64 },
    #[error("boundary-ambiguous: orbit point at time {time} is {distance:e} from a rectangle boundary")]
    BoundaryAmbiguous { time: i64, distance: f64 },
    #[error("inadmissible-string: transition {from} -> {to} at position {position}")]
    InadmissibleString { position: i64, from: usize, to: usize },
    #[error("insufficient-data: {0}")]
    InsufficientData(String),
    #[error("not-mixing: C^{a} has a zero entry")]
    NotMixing { a: usize },
    #[error("too-many-polymers: {count} exceeds the limit {limit}")]
    TooManyPolymers { count: usize, limit: usize },
    #[error("singular-minor: log|det| underflow at step {step}")]
    SingularMinor { step: usize },
    #[error("insufficient-eps-points: {0} values given, at least 3 required")]
    InsufficientEpsPoints(usize),
    #[error("nonconvex-input: second difference {value:e} at grid index {index}")]
    NonconvexInput { index: usize, value: f64 },
    #[error("event-too-rare: observed {observed} times, need at least {required}")]
    EventTooRare { observed: usize, required: usize },
    #[error("orbit-format: {0}")]
    OrbitFormat(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl SrbError {
    /// Stable kebab-case name used in run manifests.
    pub fn name(&self) -> &'static str {
        match self {
            SrbError::InvalidLattice(_) => "invalid-lattice",
            SrbError::InvalidState(_) => "invalid-state",
            SrbError::InvalidConfig(_) => "config-invalid",
            SrbError::DerivativeOrderUnsupported { .. } => "derivative-order-unsupported",
            SrbError::DegenerateFrame { .. } => "degenerate-frame",
            SrbError::BoundaryAmbiguous { .. } => "boundary-ambiguous",
            SrbError::InadmissibleString { .. } => "inadmissible-string",
            SrbError::InsufficientData(_) => "insufficient-data",
            SrbError::NotMixing { .. } => "not-mixing",
            SrbError::TooManyPolymers { .. } => "too-many-polymers",
            SrbError::SingularMinor { .. } => "singular-minor",
            SrbError::InsufficientEpsPoints(_) => "insufficient-eps-points",
            SrbError::NonconvexInput { .. } => "nonconvex-input",
            SrbError::EventTooRare { .. } => "event-too-rare",
            SrbError::OrbitFormat(_) => "orbit-format",
            SrbError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, SrbError>;
