use std::fmt;

use sigchart::charting::ChartError;
use sigchart::datastore::DataError;
use sigchart::distances::DistanceError;
use sigchart::eval::EvalError;
use sigchart::featurize::FeatureError;
use sigchart::synthgen::SynthError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidLevel(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DistanceError> for CliError {
    fn from(e: DistanceError) -> Self {
        match e {
            DistanceError::InvalidK { .. } => CliError::Config(e.to_string()),
            DistanceError::AllZero => CliError::Numeric(e.to_string()),
            DistanceError::Feature(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ChartError> for CliError {
    fn from(e: ChartError) -> Self {
        match e {
            ChartError::NonFiniteLoss { .. } | ChartError::NonFinite => CliError::Numeric(e.to_string()),
            ChartError::InvalidConfig(_) | ChartError::InvalidComponents { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DegenerateAnchors | EvalError::TooManyRedraws(_) => CliError::Numeric(e.to_string()),
            EvalError::InvalidK { .. } | EvalError::TooFewSamples { .. } => CliError::Config(e.to_string()),
            EvalError::Distance(d) => d.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
