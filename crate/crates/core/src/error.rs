use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not a distribution: {0}")]
    NotADistribution(String),
    #[error("support of {cells} cells exceeds the cap of {cap}")]
    SupportTooLarge { cells: u128, cap: u128 },
    #[error("signal {signal} of expert {expert} has zero marginal probability")]
    ZeroProbabilitySignal { expert: usize, signal: usize },
    #[error("prior odds undefined: P(omega=1) = {0}")]
    DegeneratePrior(f64),
    #[error("reports mix a certain 0 and a certain 1")]
    ContradictoryReports,
    #[error("supports differ: {0}")]
    SupportMismatch(String),
    #[error("empty sample set")]
    EmptySample,
    #[error("profile not in the support of the optimal aggregator")]
    UnseenProfile,
    #[error("every outcome has zero likelihood under the reports")]
    AllZeroLikelihood,
    #[error("invalid search grid: {0}")]
    InvalidGrid(String),
    #[error("no sample has outcome {0}")]
    MissingOutcomeClass(usize),
    #[error("zero denominator in the rho estimate")]
    ZeroDenominator,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no outcome class passes the count screen")]
    NoQualifyingIndex,
    #[error("fewer than one complete group of size {0}")]
    InsufficientGroups(usize),
    #[error("signal space size {0} is odd")]
    OddSignalSpace(usize),
    #[error("sign vector has length {got}, expected {expected}")]
    SignVectorMismatch { expected: usize, got: usize },
    #[error("epsilon {eps} must be below {bound}")]
    EpsilonTooLarge { eps: f64, bound: f64 },
    #[error("invalid distinguisher: {0}")]
    InvalidDistinguisher(String),
    #[error("unknown battery: {0}")]
    UnknownBattery(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("loss identity violated: gap {gap} vs direct {direct}")]
    GapIdentity { gap: f64, direct: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
