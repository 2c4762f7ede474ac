//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// A malformed input row. `row` counts data rows starting at 1
    /// (the header is row 0).
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },

    /// A subject appeared under more than one group id.
    #[error("subject {subject_id} appears in groups {first_group} and {second_group}")]
    CrossGroupSubject {
        subject_id: String,
        first_group: String,
        second_group: String,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The intra-class correlation cannot be estimated: no subject
    /// contributes two or more decisions.
    #[error("correlation inestimable for group {group_id}: no subject has 2 or more attempts")]
    RhoInestimable { group_id: String },

    /// The F statistic's pooled variance denominator is not positive.
    /// `group_terms` carries each group's contribution for diagnosis.
    #[error("F statistic undefined: pooled variance denominator {denominator} is not positive")]
    UndefinedStatistic {
        denominator: f64,
        group_terms: Vec<(String, f64)>,
    },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AuditError>;
