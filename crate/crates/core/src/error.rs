use thiserror::Error;

/// A single violated invariant found while validating an [`Instance`](crate::Instance).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("instance must have at least one rider and one driver (m={m}, n={n})")]
    EmptyDimension { m: usize, n: usize },
    #[error("{matrix} has {found} rows, expected {expected}")]
    RowCount {
        matrix: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{matrix} row {row} has {found} columns, expected {expected}")]
    ColumnCount {
        matrix: &'static str,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("weight out of [0,1] at ({rider},{driver}): {value}")]
    WeightOutOfRange { rider: usize, driver: usize, value: f64 },
    #[error("probability out of [0,1] at ({rider},{driver}): {value}")]
    ProbOutOfRange { rider: usize, driver: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("invalid 3-partition spec: {0}")]
    InvalidThreePartition(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("enumeration over {size} items exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("enumeration needs {required} states but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("{candidates} candidate count vectors exceed the cap of {cap}; retry with delta >= {suggested_delta}")]
    EnumerationCap {
        candidates: u128,
        cap: u128,
        suggested_delta: f64,
    },
    #[error("instance is not homogeneous: p[{rider}][{driver}] = {value} differs from {reference}")]
    NotHomogeneous {
        rider: usize,
        driver: usize,
        value: f64,
        reference: f64,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("linear program {0}")]
    Lp(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
