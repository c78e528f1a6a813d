//! Embedded tabular engine over CSV-backed tables.
//!
//! Tables are immutable after load and [`execute`] is a pure function of
//! its inputs, so any number of queries can run against one [`Tables`] map
//! concurrently.

pub mod dataset;
mod engine;
pub mod value;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

pub use dataset::{load_dataset, DatasetError, Table};
pub use engine::{execute, execute_traced};
pub use value::{Decimal2, Value};

/// Loaded tables keyed by name.
pub type Tables = BTreeMap<String, Table>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub row_count: usize,
    /// Set when the effective limit cut rows from the result.
    pub truncated: bool,
}

/// Only reachable when the query was validated against a different
/// contract than the tables it runs on, or on arithmetic overflow.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("table {0} is not loaded")]
    MissingTable(String),
    #[error("column {0} does not resolve against the loaded tables")]
    UnresolvedColumn(String),
    #[error("arithmetic overflow in {0}")]
    Overflow(String),
}

/// `(table, column)` pairs actually read while executing a query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadTrace {
    pub reads: BTreeSet<(String, String)>,
}
