//! Brute-force reference evaluation of a query, written without reference to
//! the engine: nested loops, linear group search, insertion sort, and its
//! own JSON output.

use std::cmp::Ordering;

use dpgate::audit::canonical_json;
use dpgate::executor::{execute, Value};
use dpgate::sqlguard::ast::{
    AggregateArg, AggregateFn, ColumnRef, CompareOp, Direction, Literal, OrderExpr, Predicate, QueryAst, SelectExpr,
};
use dpgate::sqlguard::validate;

use super::execgen::{ExecCase, Tables};

#[derive(Clone, Debug, PartialEq)]
enum V {
    Int(i64),
    Cents(i64),
    Str(String),
    Bool(bool),
    Date(String),
}

fn from_value(v: &Value) -> V {
    match v {
        Value::Integer(n) => V::Int(*n),
        Value::Decimal(d) => V::Cents(d.cents()),
        Value::Text(s) => V::Str(s.clone()),
        Value::Boolean(b) => V::Bool(*b),
        Value::Date(s) => V::Date(s.clone()),
    }
}

fn hundredths(v: &V) -> Option<i128> {
    match v {
        V::Int(n) => Some(*n as i128 * 100),
        V::Cents(c) => Some(*c as i128),
        _ => None,
    }
}

fn order(a: &V, b: &V) -> Ordering {
    match (a, b) {
        (V::Int(x), V::Int(y)) => x.cmp(y),
        (V::Str(x), V::Str(y)) | (V::Date(x), V::Date(y)) => x.as_bytes().cmp(y.as_bytes()),
        (V::Bool(x), V::Bool(y)) => x.cmp(y),
        _ => match (hundredths(a), hundredths(b)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => Ordering::Equal,
        },
    }
}

fn against_literal(v: &V, lit: &Literal) -> Option<Ordering> {
    match (v, lit) {
        (V::Str(s) | V::Date(s), Literal::String(l)) => Some(s.as_bytes().cmp(l.as_bytes())),
        (V::Bool(b), Literal::Boolean(l)) => Some(b.cmp(l)),
        (_, Literal::Integer(n)) => Some(hundredths(v)?.cmp(&(*n as i128 * 100))),
        (_, Literal::Decimal(d)) => Some(hundredths(v)?.cmp(&(d.cents() as i128))),
        _ => None,
    }
}

fn op_holds(op: CompareOp, o: Ordering) -> bool {
    match op {
        CompareOp::Lt => o.is_lt(),
        CompareOp::LtEq => o.is_le(),
        CompareOp::Eq => o.is_eq(),
        CompareOp::NotEq => o.is_ne(),
        CompareOp::GtEq => o.is_ge(),
        CompareOp::Gt => o.is_gt(),
    }
}

/// A joined row: the from-table row and, for joins, the joined-table row.
type JRow = (usize, Option<usize>);

struct Ctx<'a> {
    ast: &'a QueryAst,
    tables: &'a Tables,
}

impl Ctx<'_> {
    fn in_scope(&self) -> Vec<&str> {
        let mut names = vec![self.ast.from_table.name.as_str()];
        if let Some(j) = &self.ast.join {
            names.push(j.table.name.as_str());
        }
        names
    }

    fn locate(&self, col: &ColumnRef) -> (String, usize) {
        let table = match &col.table {
            Some(t) => t.clone(),
            None => {
                let owners: Vec<&str> = self
                    .in_scope()
                    .into_iter()
                    .filter(|t| self.tables[*t].columns.iter().any(|c| c.name == col.column))
                    .collect();
                assert_eq!(owners.len(), 1, "oracle cannot resolve {col}");
                owners[0].to_string()
            }
        };
        let idx = self.tables[&table]
            .columns
            .iter()
            .position(|c| c.name == col.column)
            .expect("column exists");
        (table, idx)
    }

    fn fetch(&self, row: JRow, col: &ColumnRef) -> V {
        let (table, idx) = self.locate(col);
        let r = if table == self.ast.from_table.name {
            row.0
        } else {
            row.1.expect("joined row present")
        };
        from_value(&self.tables[&table].rows[r][idx])
    }

    fn test(&self, row: JRow, p: &Predicate) -> bool {
        match p {
            Predicate::Compare { column, op, value } => {
                against_literal(&self.fetch(row, column), value).is_some_and(|o| op_holds(*op, o))
            }
            Predicate::And(l, r) => self.test(row, l) && self.test(row, r),
            Predicate::Or(l, r) => self.test(row, l) || self.test(row, r),
        }
    }
}

fn column_type_is_integer(ctx: &Ctx<'_>, col: &ColumnRef) -> bool {
    let (table, idx) = ctx.locate(col);
    ctx.tables[&table].columns[idx].value_type == dpgate::catalog::ValueType::Integer
}

fn round_half_away(total: i128, n: i128) -> i128 {
    let magnitude = (2 * total.abs() + n) / (2 * n);
    if total < 0 {
        -magnitude
    } else {
        magnitude
    }
}

fn aggregate(ctx: &Ctx<'_>, func: AggregateFn, arg: &AggregateArg, rows: &[JRow]) -> V {
    let col = match arg {
        AggregateArg::Star => return V::Int(rows.len() as i64),
        AggregateArg::Column(c) => c,
    };
    let values: Vec<V> = rows.iter().map(|r| ctx.fetch(*r, col)).collect();
    match func {
        AggregateFn::Count => V::Int(values.len() as i64),
        AggregateFn::Min | AggregateFn::Max => {
            let mut best = values[0].clone();
            for v in &values[1..] {
                let o = order(v, &best);
                if (func == AggregateFn::Min && o.is_lt()) || (func == AggregateFn::Max && o.is_gt()) {
                    best = v.clone();
                }
            }
            best
        }
        AggregateFn::Sum | AggregateFn::Avg => {
            let total: i128 = values.iter().map(|v| hundredths(v).unwrap()).sum();
            if func == AggregateFn::Avg {
                V::Cents(round_half_away(total, values.len() as i128) as i64)
            } else if column_type_is_integer(ctx, col) {
                V::Int((total / 100) as i64)
            } else {
                V::Cents(total as i64)
            }
        }
    }
}

fn output_name(item: &dpgate::sqlguard::ast::SelectItem) -> String {
    if let Some(a) = &item.alias {
        return a.clone();
    }
    match &item.expr {
        SelectExpr::Column(c) => c.column.clone(),
        SelectExpr::Aggregate(a) => {
            let name = match a.func {
                AggregateFn::Count => "count",
                AggregateFn::Sum => "sum",
                AggregateFn::Avg => "avg",
                AggregateFn::Min => "min",
                AggregateFn::Max => "max",
            };
            match &a.arg {
                AggregateArg::Star => format!("{name}(*)"),
                AggregateArg::Column(c) => format!("{name}({})", c.column),
            }
        }
    }
}

fn json_str(s: &str) -> String {
    let mut out = String::from("\"");
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_value(v: &V) -> String {
    match v {
        V::Int(n) => n.to_string(),
        V::Cents(c) => {
            let sign = if *c < 0 { "-" } else { "" };
            let a = c.unsigned_abs();
            json_str(&format!("{sign}{}.{:02}", a / 100, a % 100))
        }
        V::Str(s) | V::Date(s) => json_str(s),
        V::Bool(b) => b.to_string(),
    }
}

/// Canonical JSON of the expected result set.
pub fn expected(case: &ExecCase) -> String {
    let ast = &case.ast;
    let ctx = Ctx {
        ast,
        tables: &case.tables,
    };
    let from = &case.tables[&ast.from_table.name];

    let mut joined: Vec<JRow> = Vec::new();
    for l in 0..from.rows.len() {
        match &ast.join {
            None => joined.push((l, None)),
            Some(j) => {
                for r in 0..case.tables[&j.table.name].rows.len() {
                    let row = (l, Some(r));
                    if ctx.fetch(row, &j.left) == ctx.fetch(row, &j.right) {
                        joined.push(row);
                    }
                }
            }
        }
    }
    if let Some(p) = &ast.where_clause {
        joined.retain(|r| ctx.test(*r, p));
    }

    let grouped = !ast.group_by.is_empty()
        || ast
            .select_items
            .iter()
            .any(|s| matches!(s.expr, SelectExpr::Aggregate(_)));

    // Each output row keeps a representative source row for ORDER BY columns.
    let mut out: Vec<(Vec<V>, JRow)> = Vec::new();
    if grouped {
        let mut groups: Vec<(Vec<V>, Vec<JRow>)> = Vec::new();
        for r in &joined {
            let key: Vec<V> = ast.group_by.iter().map(|c| ctx.fetch(*r, c)).collect();
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(*r),
                None => groups.push((key, vec![*r])),
            }
        }
        for (_, members) in groups {
            let values = ast
                .select_items
                .iter()
                .map(|item| match &item.expr {
                    SelectExpr::Column(c) => ctx.fetch(members[0], c),
                    SelectExpr::Aggregate(a) => aggregate(&ctx, a.func, &a.arg, &members),
                })
                .collect();
            out.push((values, members[0]));
        }
    } else {
        for r in &joined {
            let values = ast
                .select_items
                .iter()
                .map(|item| match &item.expr {
                    SelectExpr::Column(c) => ctx.fetch(*r, c),
                    SelectExpr::Aggregate(_) => unreachable!(),
                })
                .collect();
            out.push((values, *r));
        }
    }

    let before = |a: &(Vec<V>, JRow), b: &(Vec<V>, JRow)| -> bool {
        for item in &ast.order_by {
            let (x, y) = match &item.expr {
                OrderExpr::Alias(name) => {
                    let i = ast
                        .select_items
                        .iter()
                        .position(|s| s.alias.as_deref() == Some(name))
                        .unwrap();
                    (a.0[i].clone(), b.0[i].clone())
                }
                OrderExpr::Column(c) => (ctx.fetch(a.1, c), ctx.fetch(b.1, c)),
            };
            let mut o = order(&x, &y);
            if item.direction == Direction::Desc {
                o = o.reverse();
            }
            if o.is_ne() {
                return o.is_lt();
            }
        }
        false
    };
    // Insertion sort: an element moves left only past strictly greater ones.
    for i in 1..out.len() {
        let mut j = i;
        while j > 0 && before(&out[j], &out[j - 1]) {
            out.swap(j, j - 1);
            j -= 1;
        }
    }

    let row_limit = case.contract.terms.row_limit;
    let limit = ast.limit.map_or(row_limit, |l| l.min(row_limit)) as usize;
    let truncated = out.len() > limit;
    out.truncate(limit);

    let columns: Vec<String> = ast.select_items.iter().map(|s| json_str(&output_name(s))).collect();
    let rows: Vec<String> = out
        .iter()
        .map(|(vals, _)| format!("[{}]", vals.iter().map(json_value).collect::<Vec<_>>().join(",")))
        .collect();
    format!(
        "{{\"columns\":[{}],\"row_count\":{},\"rows\":[{}],\"truncated\":{}}}",
        columns.join(","),
        out.len(),
        rows.join(","),
        truncated
    )
}

/// Canonical JSON of what the engine returns for the case.
pub fn actual(case: &ExecCase) -> Result<String, String> {
    let vq = validate(&case.ast, &case.contract).map_err(|v| format!("validation failed: {v}"))?;
    let rs = execute(&vq, &case.tables).map_err(|e| format!("execution failed: {e}"))?;
    Ok(canonical_json(&serde_json::to_value(&rs).unwrap()))
}
