use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot build a histogram from an empty string")]
    EmptyString,

    #[error("invalid location id: {0:?}")]
    InvalidLocation(String),

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("duplicate owner id {0:?} in histogram set")]
    DuplicateOwner(String),

    #[error("non-finite coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid grid cell side {0}; must be positive and finite")]
    InvalidCellSide(f64),

    #[error("no mass left after suppression")]
    ZeroMassAfterSuppression,

    #[error("support of p is not contained in support of q at location {0:?}")]
    AbsoluteContinuity(String),

    #[error("unknown metric {0:?}; expected proposed | l1 | cosine | dot")]
    UnknownMetric(String),

    #[error("left side has {left} nodes but right side only {right}; pass the smaller set as left")]
    SwapSides { left: usize, right: usize },

    #[error("cardinality {r} is outside 1..={max}")]
    InvalidCardinality { r: usize, max: usize },

    #[error("instance {left}x{right} exceeds the brute-force limit of {limit}")]
    TooLargeForOracle { left: usize, right: usize, limit: usize },

    #[error("expected metric {expected}, instance uses {found}")]
    MetricMismatch { expected: String, found: String },

    #[error("assignment is not a maximal matching: {0}")]
    NotMaximal(String),

    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },

    #[error("invalid overlap: {0}")]
    InvalidOverlap(String),

    #[error("invalid population spec: {0}")]
    InvalidPopulation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyString => "EmptyString",
            Error::InvalidLocation(_) => "InvalidLocation",
            Error::InvalidHistogram(_) => "InvalidHistogram",
            Error::DuplicateOwner(_) => "DuplicateOwner",
            Error::InvalidCoordinate { .. } => "InvalidCoordinate",
            Error::InvalidCellSide(_) => "InvalidCellSide",
            Error::ZeroMassAfterSuppression => "ZeroMassAfterSuppression",
            Error::AbsoluteContinuity(_) => "AbsoluteContinuity",
            Error::UnknownMetric(_) => "UnknownMetric",
            Error::SwapSides { .. } => "SwapSides",
            Error::InvalidCardinality { .. } => "InvalidCardinality",
            Error::TooLargeForOracle { .. } => "TooLargeForOracle",
            Error::MetricMismatch { .. } => "MetricMismatch",
            Error::NotMaximal(_) => "NotMaximal",
            Error::InvalidK { .. } => "InvalidK",
            Error::InvalidOverlap(_) => "InvalidOverlap",
            Error::InvalidPopulation(_) => "InvalidPopulation",
            Error::Config(_) => "ConfigError",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
