use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::value::Value;
use crate::catalog::{Classification, ColumnDef, ValueType};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema line {line}: {message}")]
    SchemaParse { line: usize, message: String },
    /// Header or row shape disagrees with the schema. `row` 0 is the header;
    /// data rows and columns are 1-based.
    #[error("row {row}, column {col} does not match the schema")]
    SchemaMismatch { row: usize, col: usize },
    #[error("row {row}, column {col}: cannot parse value")]
    ValueParseError { row: usize, col: usize },
    #[error("csv error: {0}")]
    Csv(String),
}

/// Immutable in-memory table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    /// Builds a table after checking every row against the column types.
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>, rows: Vec<Vec<Value>>) -> Result<Self, DatasetError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(DatasetError::SchemaMismatch {
                    row: r + 1,
                    col: row.len(),
                });
            }
            for (c, (value, def)) in row.iter().zip(&columns).enumerate() {
                if value.value_type() != def.value_type {
                    return Err(DatasetError::ValueParseError { row: r + 1, col: c + 1 });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            columns,
            rows,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Reads a schema sidecar: one `name:value_type:classification` per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_schema(path: &Path) -> Result<Vec<ColumnDef>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_schema(&text)
}

pub fn parse_schema(text: &str) -> Result<Vec<ColumnDef>, DatasetError> {
    let mut columns = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| DatasetError::SchemaParse { line: i + 1, message };
        let parts: Vec<&str> = line.split(':').map(str::trim).collect();
        let [name, value_type, classification] = parts.as_slice() else {
            return Err(err(format!("expected name:value_type:classification, got {line:?}")));
        };
        if !crate::sqlguard::is_identifier(name) {
            return Err(err(format!("{name:?} is not a valid column name")));
        }
        let value_type =
            ValueType::parse(value_type).ok_or_else(|| err(format!("unknown value type {value_type:?}")))?;
        let classification = Classification::parse(classification)
            .ok_or_else(|| err(format!("unknown classification {classification:?}")))?;
        if columns.iter().any(|c: &ColumnDef| c.name == *name) {
            return Err(err(format!("column {name} declared twice")));
        }
        columns.push(ColumnDef {
            name: name.to_string(),
            value_type,
            classification,
            description: String::new(),
        });
    }
    if columns.is_empty() {
        return Err(DatasetError::SchemaParse {
            line: 0,
            message: "schema declares no columns".into(),
        });
    }
    Ok(columns)
}

/// Loads a CSV file (header row required) typed by its schema sidecar.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<Table, DatasetError> {
    let columns = read_schema(schema_path)?;
    let name = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let data = fs::read(csv_path).map_err(|source| DatasetError::Io {
        path: csv_path.to_path_buf(),
        source,
    })?;
    parse_csv(name, columns, &data)
}

pub fn parse_csv(name: String, columns: Vec<ColumnDef>, data: &[u8]) -> Result<Table, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(data);

    let header = reader.headers().map_err(|e| DatasetError::Csv(e.to_string()))?.clone();
    if header.len() != columns.len() {
        return Err(DatasetError::SchemaMismatch {
            row: 0,
            col: header.len().min(columns.len()) + 1,
        });
    }
    for (i, (field, def)) in header.iter().zip(&columns).enumerate() {
        if field != def.name {
            return Err(DatasetError::SchemaMismatch { row: 0, col: i + 1 });
        }
    }

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let row_no = r + 1;
        if record.len() != columns.len() {
            return Err(DatasetError::SchemaMismatch {
                row: row_no,
                col: record.len().min(columns.len()) + 1,
            });
        }
        let row = record
            .iter()
            .zip(&columns)
            .enumerate()
            .map(|(c, (raw, def))| {
                Value::parse(def.value_type, raw).ok_or(DatasetError::ValueParseError {
                    row: row_no,
                    col: c + 1,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { name, columns, rows })
}
