//! Crate-wide error type.

use thiserror::Error;

use crate::frame::Arm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(String),

    // ingestion
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` mapped to more than one role")]
    DuplicateColumn(String),
    #[error("row {row}: column `{column}` must be 0 or 1, got `{value}`")]
    BadIndicator { row: usize, column: String, value: String },
    #[error("row {row}: outcome {value} outside support [{lo}, {hi}]")]
    OutcomeOutOfSupport { row: usize, value: f64, lo: f64, hi: f64 },
    #[error("row {row}: outcome `{value}` is not a number")]
    BadOutcome { row: usize, value: String },
    #[error("row {row}: sampled unit has no treatment")]
    MissingTreatment { row: usize },
    #[error("row {row}: sampled unit has no outcome")]
    MissingOutcome { row: usize },
    #[error("row {row}: missing value for covariate `{column}`")]
    MissingCovariate { row: usize, column: String },
    #[error("row {row}: covariate `{column}` is not numeric: `{value}`")]
    BadCovariate { row: usize, column: String, value: String },
    #[error("invalid outcome support [{lo}, {hi}]")]
    InvalidSupport { lo: f64, hi: f64 },
    #[error("probability `{name}` = {value} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("frame has no units")]
    EmptyFrame,
    #[error("frame has no sampled units")]
    EmptySample,
    #[error("no sampled units in the {0} arm")]
    EmptyArm(Arm),

    // propensity / balance
    #[error("covariate `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("sample indicator takes a single value; cannot fit selection model")]
    SingleClass,
    #[error("separation detected along direction {direction:?}")]
    Separation { direction: Vec<(String, f64)> },
    #[error("no convergence after {max_iter} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { max_iter: usize, gradient_norm: f64 },
    #[error("singular design: {0}")]
    SingularDesign(String),

    // strata
    #[error("stratum count must be at least 1")]
    ZeroStrata,
    #[error("{k} strata requested but only {distinct} distinct logit values")]
    TooManyStrata { k: usize, distinct: usize },
    #[error("logit/unit count mismatch ({logits} logits for {units} units)")]
    AssignmentMismatch { logits: usize, units: usize },
    #[error("non-viable strata: {0:?}")]
    NonViableStratum(Vec<usize>),

    // bounds
    #[error("population control outcomes are required but absent")]
    MissingPopulationOutcome,
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("operation requires a binary outcome")]
    NonBinaryOutcome,

    // point estimators
    #[error("unit `{unit}` has a zero sampling propensity")]
    ZeroPropensity { unit: String },
    #[error("propensity model did not converge")]
    UnfittedModel,

    // oracle
    #[error("{slots} unresolved slots exceed the enumeration cap of {cap}")]
    TooLarge { slots: usize, cap: usize },
    #[error("unit `{unit}` has observed Y(1) < Y(0), contradicting monotone response")]
    ObservedViolation { unit: String },
    #[error("row {row}: arm label inconsistent with business-as-usual outcome")]
    InconsistentArmLabel { row: usize },

    // configuration
    #[error("bad lambda expression `{expr}`: {reason}")]
    BadLambdaExpr { expr: String, reason: String },
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Configuration problems, as opposed to problems with the data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::BadLambdaExpr { .. }
                | Error::Config(_)
                | Error::ZeroStrata
                | Error::NegativeLambda(_)
                | Error::InvalidSupport { .. }
                | Error::InvalidProbability { .. }
                | Error::DuplicateColumn(_)
                | Error::UnknownCovariate(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
