//! Tabular ingestion and two-level design assembly.

mod dataset;
mod spec;
mod table;

pub use dataset::{build_dataset, TransformRecord, TwoLevelDataset};
pub use spec::{Level, ModelSpec, NamedTransform, RandomTerm, Transform};
pub use table::{load_csv, read_csv, Column, ColumnType, RawTable, SummaryStats};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Table(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("column '{0}' is not numeric")]
    NotNumeric(String),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': missing value")]
    Missing { row: usize, column: String },
    #[error("level '{level}' does not occur in column '{column}'")]
    AbsentLevel { column: String, level: String },
    #[error("term '{term}': interaction operand '{operand}' is not a previously declared variable or term")]
    UndeclaredOperand { term: String, operand: String },
    #[error("column '{0}' has zero variance and cannot be scaled")]
    ZeroVariance(String),
    #[error("invalid model: {0}")]
    Spec(String),
}

#[cfg(test)]
mod tests;
