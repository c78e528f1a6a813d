use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use super::{Decimal2, ExecError, ReadTrace, ResultSet, Table, Tables, Value};
use crate::sqlguard::ast::{AggregateArg, AggregateFn, ColumnRef, Direction, OrderExpr, Predicate, SelectExpr};
use crate::sqlguard::ValidatedQuery;

/// Runs a validated query.
///
/// Rows flow in a fixed order so results are reproducible bytewise: the
/// join emits pairs in nested-loop order (left row, then matching right rows
/// in input order), groups appear in first-appearance order, ORDER BY is a
/// stable sort and the effective limit is applied last.
///
/// Without GROUP BY, aggregates over an empty input yield no row at all:
/// there is no NULL to stand in for `SUM` of nothing.
pub fn execute(vq: &ValidatedQuery, tables: &Tables) -> Result<ResultSet, ExecError> {
    run(vq, tables, None)
}

/// Like [`execute`], also recording every column the engine reads.
pub fn execute_traced(vq: &ValidatedQuery, tables: &Tables, trace: &mut ReadTrace) -> Result<ResultSet, ExecError> {
    let reads = RefCell::new(BTreeSet::new());
    let result = run(vq, tables, Some(&reads));
    trace.reads.extend(reads.into_inner());
    result
}

type Row<'t> = Vec<&'t Value>;

/// A column reference bound to a position in the joined row.
#[derive(Clone)]
struct Slot {
    offset: usize,
    table: String,
    column: String,
}

struct Reader<'r> {
    reads: Option<&'r RefCell<BTreeSet<(String, String)>>>,
}

impl Reader<'_> {
    fn note(&self, slot: &Slot) {
        if let Some(reads) = self.reads {
            let mut reads = reads.borrow_mut();
            let key = (slot.table.clone(), slot.column.clone());
            if !reads.contains(&key) {
                reads.insert(key);
            }
        }
    }

    fn get<'t>(&self, row: &Row<'t>, slot: &Slot) -> &'t Value {
        self.note(slot);
        row[slot.offset]
    }
}

struct Layout<'t> {
    from: &'t Table,
    join: Option<&'t Table>,
}

impl Layout<'_> {
    fn bind(&self, vq: &ValidatedQuery, col: &ColumnRef) -> Result<Slot, ExecError> {
        let unresolved = || ExecError::UnresolvedColumn(col.to_string());
        let resolved = vq.resolve(col).ok_or_else(unresolved)?;
        let (table, base) = if resolved.table == self.from.name {
            (self.from, 0)
        } else {
            match self.join {
                Some(t) if t.name == resolved.table => (t, self.from.columns.len()),
                _ => return Err(unresolved()),
            }
        };
        let index = table.column_index(&resolved.column).ok_or_else(unresolved)?;
        Ok(Slot {
            offset: base + index,
            table: table.name.clone(),
            column: resolved.column.clone(),
        })
    }
}

fn lookup<'t>(tables: &'t Tables, name: &str) -> Result<&'t Table, ExecError> {
    tables
        .get(name)
        .ok_or_else(|| ExecError::MissingTable(name.to_string()))
}

enum BoundPredicate {
    Compare {
        slot: Slot,
        op: crate::sqlguard::ast::CompareOp,
        value: crate::sqlguard::ast::Literal,
    },
    And(Box<BoundPredicate>, Box<BoundPredicate>),
    Or(Box<BoundPredicate>, Box<BoundPredicate>),
}

fn bind_predicate(layout: &Layout<'_>, vq: &ValidatedQuery, p: &Predicate) -> Result<BoundPredicate, ExecError> {
    Ok(match p {
        Predicate::Compare { column, op, value } => BoundPredicate::Compare {
            slot: layout.bind(vq, column)?,
            op: *op,
            value: value.clone(),
        },
        Predicate::And(l, r) => BoundPredicate::And(
            Box::new(bind_predicate(layout, vq, l)?),
            Box::new(bind_predicate(layout, vq, r)?),
        ),
        Predicate::Or(l, r) => BoundPredicate::Or(
            Box::new(bind_predicate(layout, vq, l)?),
            Box::new(bind_predicate(layout, vq, r)?),
        ),
    })
}

fn eval(reader: &Reader<'_>, p: &BoundPredicate, row: &Row<'_>) -> bool {
    match p {
        BoundPredicate::Compare { slot, op, value } => reader
            .get(row, slot)
            .compare_literal(value)
            .is_some_and(|ord| op.holds(ord)),
        BoundPredicate::And(l, r) => eval(reader, l, row) && eval(reader, r, row),
        BoundPredicate::Or(l, r) => eval(reader, l, row) || eval(reader, r, row),
    }
}

enum Output {
    Column(Slot),
    Aggregate(AggregateFn, Option<Slot>),
}

fn run(
    vq: &ValidatedQuery,
    tables: &Tables,
    reads: Option<&RefCell<BTreeSet<(String, String)>>>,
) -> Result<ResultSet, ExecError> {
    let ast = &vq.ast;
    let reader = Reader { reads };
    let from = lookup(tables, &ast.from_table.name)?;
    let join_table = match &ast.join {
        Some(join) => Some(lookup(tables, &join.table.name)?),
        None => None,
    };
    let layout = Layout { from, join: join_table };

    let outputs = ast
        .select_items
        .iter()
        .map(|item| {
            Ok(match &item.expr {
                SelectExpr::Column(c) => Output::Column(layout.bind(vq, c)?),
                SelectExpr::Aggregate(agg) => Output::Aggregate(
                    agg.func,
                    match &agg.arg {
                        AggregateArg::Star => None,
                        AggregateArg::Column(c) => Some(layout.bind(vq, c)?),
                    },
                ),
            })
        })
        .collect::<Result<Vec<_>, ExecError>>()?;
    let predicate = match &ast.where_clause {
        Some(p) => Some(bind_predicate(&layout, vq, p)?),
        None => None,
    };
    let group_slots = ast
        .group_by
        .iter()
        .map(|c| layout.bind(vq, c))
        .collect::<Result<Vec<_>, _>>()?;
    enum SortKey {
        Source(Slot),
        Output(usize),
    }
    let sort_keys = ast
        .order_by
        .iter()
        .map(|item| {
            let key = match &item.expr {
                OrderExpr::Column(c) => SortKey::Source(layout.bind(vq, c)?),
                OrderExpr::Alias(a) => SortKey::Output(
                    ast.select_items
                        .iter()
                        .position(|s| s.alias.as_deref() == Some(a.as_str()))
                        .ok_or_else(|| ExecError::UnresolvedColumn(a.clone()))?,
                ),
            };
            Ok((key, item.direction))
        })
        .collect::<Result<Vec<_>, ExecError>>()?;

    // (1) row stream
    let mut stream: Vec<Row<'_>> = Vec::new();
    match (&ast.join, join_table) {
        (Some(join), Some(right)) => {
            let left_slot = layout.bind(vq, &join.left)?;
            let right_slot = layout.bind(vq, &join.right)?;
            let (from_slot, join_slot) = if left_slot.offset < from.columns.len() {
                (left_slot, right_slot)
            } else {
                (right_slot, left_slot)
            };
            let width = from.columns.len();
            let mut index: HashMap<&Value, Vec<usize>> = HashMap::new();
            reader.note(&join_slot);
            reader.note(&from_slot);
            for (i, row) in right.rows.iter().enumerate() {
                index.entry(&row[join_slot.offset - width]).or_default().push(i);
            }
            for left in &from.rows {
                if let Some(matches) = index.get(&left[from_slot.offset]) {
                    for &i in matches {
                        stream.push(left.iter().chain(right.rows[i].iter()).collect());
                    }
                }
            }
        }
        _ => stream.extend(from.rows.iter().map(|r| r.iter().collect::<Row<'_>>())),
    }

    // (2) where
    if let Some(p) = &predicate {
        stream.retain(|row| eval(&reader, p, row));
    }

    // (3)+(4) projection, grouping and aggregation. Each output row keeps a
    // representative source row for ORDER BY on non-projected columns.
    let mut produced: Vec<(Vec<Value>, Row<'_>)> = Vec::new();
    if ast.is_grouped() {
        let mut groups: Vec<(Vec<&Value>, Vec<usize>)> = Vec::new();
        let mut positions: HashMap<Vec<&Value>, usize> = HashMap::new();
        for (i, row) in stream.iter().enumerate() {
            let key: Vec<&Value> = group_slots.iter().map(|s| reader.get(row, s)).collect();
            match positions.get(&key) {
                Some(&g) => groups[g].1.push(i),
                None => {
                    positions.insert(key.clone(), groups.len());
                    groups.push((key, vec![i]));
                }
            }
        }
        for (_, members) in groups {
            let rows: Vec<&Row<'_>> = members.iter().map(|&i| &stream[i]).collect();
            let values = outputs
                .iter()
                .map(|out| match out {
                    Output::Column(slot) => Ok(reader.get(rows[0], slot).clone()),
                    Output::Aggregate(func, slot) => aggregate(&reader, *func, slot.as_ref(), &rows),
                })
                .collect::<Result<Vec<_>, _>>()?;
            produced.push((values, rows[0].clone()));
        }
    } else {
        for row in stream {
            let values = outputs
                .iter()
                .map(|out| match out {
                    Output::Column(slot) => reader.get(&row, slot).clone(),
                    Output::Aggregate(..) => unreachable!("ungrouped query with aggregate"),
                })
                .collect();
            produced.push((values, row));
        }
    }

    // (5) stable sort
    if !sort_keys.is_empty() {
        produced.sort_by(|(a_out, a_src), (b_out, b_src)| {
            for (key, direction) in &sort_keys {
                let (a, b) = match key {
                    SortKey::Source(slot) => (reader.get(a_src, slot), reader.get(b_src, slot)),
                    SortKey::Output(i) => (&a_out[*i], &b_out[*i]),
                };
                let ord = a.compare(b).unwrap_or(Ordering::Equal);
                let ord = match direction {
                    Direction::Asc => ord,
                    Direction::Desc => ord.reverse(),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        });
    }

    // (6) limit
    let limit = usize::try_from(vq.effective_limit).unwrap_or(usize::MAX);
    let truncated = produced.len() > limit;
    produced.truncate(limit);
    let rows: Vec<Vec<Value>> = produced.into_iter().map(|(values, _)| values).collect();
    Ok(ResultSet {
        columns: ast.select_items.iter().map(|s| s.output_name()).collect(),
        row_count: rows.len(),
        rows,
        truncated,
    })
}

fn aggregate(
    reader: &Reader<'_>,
    func: AggregateFn,
    slot: Option<&Slot>,
    rows: &[&Row<'_>],
) -> Result<Value, ExecError> {
    let count = i64::try_from(rows.len()).map_err(|_| ExecError::Overflow("COUNT".into()))?;
    let Some(slot) = slot else {
        return Ok(Value::Integer(count));
    };
    let values: Vec<&Value> = rows.iter().map(|r| reader.get(r, slot)).collect();
    match func {
        AggregateFn::Count => Ok(Value::Integer(count)),
        AggregateFn::Min | AggregateFn::Max => {
            let mut best = values[0];
            for v in &values[1..] {
                let ord = v.compare(best).unwrap_or(Ordering::Equal);
                let better = match func {
                    AggregateFn::Min => ord == Ordering::Less,
                    _ => ord == Ordering::Greater,
                };
                if better {
                    best = v;
                }
            }
            Ok(best.clone())
        }
        AggregateFn::Sum | AggregateFn::Avg => {
            let mut cents: i128 = 0;
            let mut integral = true;
            for v in &values {
                cents += match v {
                    Value::Integer(n) => i128::from(*n) * 100,
                    Value::Decimal(d) => {
                        integral = false;
                        i128::from(d.cents())
                    }
                    other => {
                        return Err(ExecError::UnresolvedColumn(format!(
                            "{} over {}",
                            func.keyword(),
                            other.value_type()
                        )))
                    }
                };
            }
            let overflow = || ExecError::Overflow(func.keyword().to_string());
            if func == AggregateFn::Sum {
                if integral {
                    i64::try_from(cents / 100).map(Value::Integer).map_err(|_| overflow())
                } else {
                    i64::try_from(cents)
                        .map(|c| Value::Decimal(Decimal2::from_cents(c)))
                        .map_err(|_| overflow())
                }
            } else {
                let avg = div_round_half_away(cents, i128::from(count));
                i64::try_from(avg)
                    .map(|c| Value::Decimal(Decimal2::from_cents(c)))
                    .map_err(|_| overflow())
            }
        }
    }
}

/// Integer division rounding halves away from zero (`2.5 → 3`, `-2.5 → -3`).
pub(crate) fn div_round_half_away(numerator: i128, denominator: i128) -> i128 {
    let quotient = numerator / denominator;
    let remainder = numerator % denominator;
    if remainder.abs() * 2 >= denominator.abs() {
        quotient + numerator.signum() * denominator.signum()
    } else {
        quotient
    }
}
