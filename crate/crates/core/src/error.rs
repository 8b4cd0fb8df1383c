use thiserror::Error;

/// Errors raised while loading data, fitting models, or estimating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no complete rows remain ({dropped} incomplete rows dropped)")]
    EmptyDataset { dropped: usize },

    #[error("covariate schema mismatch: expected {expected} covariates, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("perfect separation on feature `{feature}`{}", level_suffix(*.level))]
    Separation {
        level: Option<usize>,
        feature: String,
    },

    #[error("information matrix is singular ({0})")]
    Singular(String),

    #[error("fit did not converge in {iterations} iterations (score sup-norm {score_norm:e})")]
    NotConverged { iterations: usize, score_norm: f64 },

    #[error("rule infeasible at row {row}: no realistic level at or below target {target}")]
    RuleInfeasible { row: usize, target: usize },

    #[error("zero treatment probability for the matched level at row {row}")]
    ZeroWeight { row: usize },

    #[error("relative-risk denominator collapsed to {value:e}")]
    DegenerateDenominator { value: f64 },

    #[error("fluctuation did not converge in {iterations} iterations (epsilon trace {trace:?})")]
    FluctuationNotConverged { iterations: usize, trace: Vec<f64> },

    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn level_suffix(level: Option<usize>) -> String {
    level
        .map(|l| format!(" at treatment level {l}"))
        .unwrap_or_default()
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
