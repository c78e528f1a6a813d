//! SQL guard: the contract-derived checks every query passes before it can
//! reach a dataset.
//!
//! Supported grammar (keywords case-insensitive):
//!
//! ```text
//! query     := SELECT item {, item} FROM table
//!              [[INNER] JOIN table ON column = column]
//!              [WHERE predicate] [GROUP BY column {, column}]
//!              [ORDER BY key [ASC|DESC] {, key [ASC|DESC]}] [LIMIT n] [;]
//! item      := (column | agg '(' column ')' | COUNT '(' '*' ')') [[AS] alias]
//! agg       := COUNT | SUM | AVG | MIN | MAX
//! predicate := conj {OR conj};  conj := atom {AND atom}
//! atom      := '(' predicate ')' | column op literal
//! op        := < | <= | = | != | <> | >= | >
//! literal   := [-]integer | [-]decimal (max 2 fraction digits) | 'text' | TRUE | FALSE
//! column    := ident [. ident]
//! ```
//!
//! Everything else (`SELECT *`, subqueries, outer joins, HAVING, window
//! functions, DML/DDL, multiple statements) is a [`ParseError`].

pub mod ast;
mod lexer;
mod parser;
mod render;
mod validate;

use serde::Serialize;
use thiserror::Error;

pub use ast::{QueryAst, Span};
pub use parser::parse_sql;
pub use render::render_sql;
pub use validate::{validate, ReferencedColumn, ResolvedColumn, ValidatedQuery};

/// Syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("line {line}, column {column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(span: Span, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Self {
            line: span.line,
            column: span.column,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// Contract violation found by [`validate`], pointing at the offending node.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("unknown table {name} at {span}")]
    UnknownTable { name: String, span: Span },
    #[error("unknown column {table}.{name} at {span}")]
    UnknownColumn { table: String, name: String, span: Span },
    #[error("ambiguous column {name} at {span}; qualify it with a table name")]
    AmbiguousColumn { name: String, span: Span },
    #[error("type mismatch at {span}: {context}")]
    TypeMismatch { context: String, span: Span },
    #[error("invalid grouping at {span}: {context}")]
    InvalidGrouping { context: String, span: Span },
    #[error("table {name} appears twice at {span}")]
    DuplicateTable { name: String, span: Span },
}

impl Violation {
    pub fn span(&self) -> Span {
        match self {
            Violation::UnknownTable { span, .. }
            | Violation::UnknownColumn { span, .. }
            | Violation::AmbiguousColumn { span, .. }
            | Violation::TypeMismatch { span, .. }
            | Violation::InvalidGrouping { span, .. }
            | Violation::DuplicateTable { span, .. } => *span,
        }
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*` and not a reserved word.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && lexer::Keyword::lookup(s).is_none()
}
