use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("replay trajectory exhausted at block {block} (last entry starts at block {last_block})")]
    ReplayExhausted { block: u64, last_block: u64 },

    #[error("non-finite observation (x = {x:?}, y = {y})")]
    NonFiniteObservation { x: [f64; 2], y: f64 },

    #[error("degenerate rate denominator {0}; estimates unusable")]
    DegenerateDenominator(f64),

    #[error("negative discriminant {discriminant} at candidate rate {rate}")]
    NegativeDiscriminant { rate: f64, discriminant: f64 },

    #[error("risk target {target} infeasible: expected liquidation {at_floor} even at c = {floor}")]
    Infeasible { target: f64, floor: f64, at_floor: f64 },

    #[error("liquidation undefined: LT*(1+LI) = {0} >= 1")]
    LiquidationSpiral(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty trace")]
    EmptyTrace,

    #[error("horizon {horizon} too short: need at least {required} blocks")]
    HorizonTooShort { horizon: u64, required: u64 },

    #[error("series too short: {len} slots, need more than {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },

    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnknownAxis(_) | Error::InvalidParam { .. } | Error::TomlDe(_) => 1,
            Error::Infeasible { .. } => 3,
            _ => 2,
        }
    }
}
