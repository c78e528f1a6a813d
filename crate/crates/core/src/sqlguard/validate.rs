use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ast::{AggregateArg, AggregateFn, ColumnRef, Literal, OrderExpr, QueryAst, SelectExpr};
use super::Violation;
use crate::catalog::{Classification, DataContract, ValueType};
use crate::executor::value::parse_date;

/// A column read by a query, with its contract classification.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ReferencedColumn {
    pub table: String,
    pub column: String,
    pub classification: Classification,
}

/// Where a column reference points after name resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedColumn {
    pub table: String,
    pub column: String,
    /// Position of the column within its table.
    pub index: usize,
    pub value_type: ValueType,
    pub classification: Classification,
}

type BindingKey = (Option<String>, String);

/// A query that passed every contract guard. Only [`validate`] builds one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedQuery {
    pub ast: QueryAst,
    pub referenced_columns: BTreeSet<ReferencedColumn>,
    pub effective_limit: u64,
    #[serde(skip)]
    bindings: BTreeMap<BindingKey, ResolvedColumn>,
}

impl ValidatedQuery {
    pub fn resolve(&self, column: &ColumnRef) -> Option<&ResolvedColumn> {
        self.bindings.get(&(column.table.clone(), column.column.clone()))
    }
}

struct Scope<'a> {
    contract: &'a DataContract,
    tables: Vec<&'a str>,
    bindings: BTreeMap<BindingKey, ResolvedColumn>,
}

impl Scope<'_> {
    fn resolve(&mut self, col: &ColumnRef) -> Result<ResolvedColumn, Violation> {
        let key = (col.table.clone(), col.column.clone());
        if let Some(found) = self.bindings.get(&key) {
            return Ok(found.clone());
        }
        let table = match &col.table {
            Some(table) => {
                if !self.tables.contains(&table.as_str()) {
                    return Err(Violation::UnknownTable {
                        name: table.clone(),
                        span: col.span,
                    });
                }
                table.clone()
            }
            None => {
                let owners: Vec<&str> = self
                    .tables
                    .iter()
                    .copied()
                    .filter(|t| self.contract.column(t, &col.column).is_some())
                    .collect();
                match owners.as_slice() {
                    [only] => only.to_string(),
                    [] => {
                        return Err(Violation::UnknownColumn {
                            table: self.tables[0].to_string(),
                            name: col.column.clone(),
                            span: col.span,
                        })
                    }
                    _ => {
                        return Err(Violation::AmbiguousColumn {
                            name: col.column.clone(),
                            span: col.span,
                        })
                    }
                }
            }
        };
        let columns = &self.contract.tables[&table];
        let (index, def) = columns
            .iter()
            .enumerate()
            .find(|(_, c)| c.name == col.column)
            .ok_or_else(|| Violation::UnknownColumn {
                table: table.clone(),
                name: col.column.clone(),
                span: col.span,
            })?;
        let resolved = ResolvedColumn {
            table,
            column: def.name.clone(),
            index,
            value_type: def.value_type,
            classification: def.classification,
        };
        self.bindings.insert(key, resolved.clone());
        Ok(resolved)
    }
}

fn literal_fits(value_type: ValueType, literal: &Literal) -> bool {
    match (value_type, literal) {
        (ValueType::Integer | ValueType::Decimal2, Literal::Integer(_) | Literal::Decimal(_)) => true,
        (ValueType::Text, Literal::String(_)) => true,
        (ValueType::Date, Literal::String(s)) => parse_date(s).is_some(),
        (ValueType::Boolean, Literal::Boolean(_)) => true,
        _ => false,
    }
}

/// Checks a parsed query against a data contract.
///
/// Every table must belong to the contract and every column must resolve to
/// exactly one in-scope table. Aggregates, join keys and WHERE literals are
/// type-checked, grouped queries must group every plain output column, and
/// the row limit is clamped to the contract's `row_limit`.
pub fn validate(ast: &QueryAst, contract: &DataContract) -> Result<ValidatedQuery, Violation> {
    let mut tables = vec![ast.from_table.name.as_str()];
    for table_ref in std::iter::once(&ast.from_table).chain(ast.join.as_ref().map(|j| &j.table)) {
        if !contract.tables.contains_key(&table_ref.name) {
            return Err(Violation::UnknownTable {
                name: table_ref.name.clone(),
                span: table_ref.span,
            });
        }
    }
    if let Some(join) = &ast.join {
        if join.table.name == ast.from_table.name {
            return Err(Violation::DuplicateTable {
                name: join.table.name.clone(),
                span: join.table.span,
            });
        }
        tables.push(join.table.name.as_str());
    }

    let mut scope = Scope {
        contract,
        tables,
        bindings: BTreeMap::new(),
    };

    for item in &ast.select_items {
        match &item.expr {
            SelectExpr::Column(col) => {
                scope.resolve(col)?;
            }
            SelectExpr::Aggregate(agg) => {
                if let AggregateArg::Column(col) = &agg.arg {
                    let resolved = scope.resolve(col)?;
                    if matches!(agg.func, AggregateFn::Sum | AggregateFn::Avg) && !resolved.value_type.is_numeric() {
                        return Err(Violation::TypeMismatch {
                            context: format!(
                                "{} needs an integer or decimal2 column, {col} is {}",
                                agg.func.keyword(),
                                resolved.value_type
                            ),
                            span: agg.span,
                        });
                    }
                }
            }
        }
    }

    if let Some(join) = &ast.join {
        let left = scope.resolve(&join.left)?;
        let right = scope.resolve(&join.right)?;
        if left.table == right.table {
            return Err(Violation::TypeMismatch {
                context: format!(
                    "join condition must compare a column of {} with a column of {}",
                    ast.from_table.name, join.table.name
                ),
                span: join.left.span,
            });
        }
        if left.value_type != right.value_type {
            return Err(Violation::TypeMismatch {
                context: format!(
                    "join compares {} ({}) with {} ({})",
                    join.left, left.value_type, join.right, right.value_type
                ),
                span: join.left.span,
            });
        }
    }

    if let Some(predicate) = &ast.where_clause {
        let mut failure = None;
        visit_compares(predicate, &mut |col, literal| {
            if failure.is_some() {
                return;
            }
            match scope.resolve(col) {
                Err(v) => failure = Some(v),
                Ok(resolved) if !literal_fits(resolved.value_type, literal) => {
                    failure = Some(Violation::TypeMismatch {
                        context: format!(
                            "{col} is {} and cannot be compared with {}",
                            resolved.value_type,
                            describe_literal(literal)
                        ),
                        span: col.span,
                    });
                }
                Ok(_) => {}
            }
        });
        if let Some(v) = failure {
            return Err(v);
        }
    }

    let mut group_keys = BTreeSet::new();
    for col in &ast.group_by {
        let resolved = scope.resolve(col)?;
        group_keys.insert((resolved.table, resolved.index));
    }

    let grouped = ast.is_grouped();
    if grouped {
        for item in &ast.select_items {
            if let SelectExpr::Column(col) = &item.expr {
                let resolved = scope.resolve(col)?;
                if !group_keys.contains(&(resolved.table, resolved.index)) {
                    return Err(Violation::InvalidGrouping {
                        context: format!("{col} must appear in GROUP BY or inside an aggregate"),
                        span: col.span,
                    });
                }
            }
        }
    }

    for item in &ast.order_by {
        if let OrderExpr::Column(col) = &item.expr {
            let resolved = scope.resolve(col)?;
            if grouped && !group_keys.contains(&(resolved.table, resolved.index)) {
                return Err(Violation::InvalidGrouping {
                    context: format!("ORDER BY {col} must name a GROUP BY column or an alias"),
                    span: col.span,
                });
            }
        }
    }

    let referenced_columns = scope
        .bindings
        .values()
        .map(|r| ReferencedColumn {
            table: r.table.clone(),
            column: r.column.clone(),
            classification: r.classification,
        })
        .collect();

    let row_limit = contract.terms.row_limit;
    let effective_limit = ast.limit.unwrap_or(row_limit).min(row_limit);

    Ok(ValidatedQuery {
        ast: ast.clone(),
        referenced_columns,
        effective_limit,
        bindings: scope.bindings,
    })
}

fn visit_compares<'a>(predicate: &'a super::ast::Predicate, f: &mut impl FnMut(&'a ColumnRef, &'a Literal)) {
    use super::ast::Predicate;
    match predicate {
        Predicate::Compare { column, value, .. } => f(column, value),
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            visit_compares(l, f);
            visit_compares(r, f);
        }
    }
}

fn describe_literal(literal: &Literal) -> String {
    let mut out = String::new();
    super::render::render_literal(&mut out, literal);
    out
}
