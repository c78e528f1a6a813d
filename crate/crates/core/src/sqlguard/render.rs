use std::fmt::Write;

use super::ast::{AggregateArg, Direction, Literal, OrderExpr, Predicate, QueryAst, SelectExpr, SelectItem};

/// Canonical single-line SQL for an AST. Re-parsing the output yields an
/// equal AST.
pub fn render_sql(ast: &QueryAst) -> String {
    let mut out = String::from("SELECT ");
    for (i, item) in ast.select_items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        render_select_item(&mut out, item);
    }
    write!(out, " FROM {}", ast.from_table.name).unwrap();
    if let Some(join) = &ast.join {
        write!(out, " JOIN {} ON {} = {}", join.table.name, join.left, join.right).unwrap();
    }
    if let Some(predicate) = &ast.where_clause {
        out.push_str(" WHERE ");
        render_predicate(&mut out, predicate);
    }
    if !ast.group_by.is_empty() {
        out.push_str(" GROUP BY ");
        let cols: Vec<String> = ast.group_by.iter().map(ToString::to_string).collect();
        out.push_str(&cols.join(", "));
    }
    if !ast.order_by.is_empty() {
        out.push_str(" ORDER BY ");
        for (i, item) in ast.order_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            match &item.expr {
                OrderExpr::Column(c) => write!(out, "{c}").unwrap(),
                OrderExpr::Alias(a) => out.push_str(a),
            }
            out.push_str(match item.direction {
                Direction::Asc => " ASC",
                Direction::Desc => " DESC",
            });
        }
    }
    if let Some(limit) = ast.limit {
        write!(out, " LIMIT {limit}").unwrap();
    }
    out
}

fn render_select_item(out: &mut String, item: &SelectItem) {
    match &item.expr {
        SelectExpr::Column(c) => write!(out, "{c}").unwrap(),
        SelectExpr::Aggregate(agg) => {
            out.push_str(agg.func.keyword());
            out.push('(');
            match &agg.arg {
                AggregateArg::Star => out.push('*'),
                AggregateArg::Column(c) => write!(out, "{c}").unwrap(),
            }
            out.push(')');
        }
    }
    if let Some(alias) = &item.alias {
        write!(out, " AS {alias}").unwrap();
    }
}

fn precedence(p: &Predicate) -> u8 {
    match p {
        Predicate::Or(..) => 1,
        Predicate::And(..) => 2,
        Predicate::Compare { .. } => 3,
    }
}

fn render_operand(out: &mut String, child: &Predicate, parent: u8, right: bool) {
    // Operators are left-associative, so an equal-precedence right operand
    // needs parentheses to keep its grouping.
    let needs_parens = precedence(child) < parent || (right && precedence(child) == parent);
    if needs_parens {
        out.push('(');
        render_predicate(out, child);
        out.push(')');
    } else {
        render_predicate(out, child);
    }
}

fn render_predicate(out: &mut String, p: &Predicate) {
    match p {
        Predicate::Compare { column, op, value } => {
            write!(out, "{column} {} ", op.symbol()).unwrap();
            render_literal(out, value);
        }
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            let prec = precedence(p);
            render_operand(out, l, prec, false);
            out.push_str(if prec == 2 { " AND " } else { " OR " });
            render_operand(out, r, prec, true);
        }
    }
}

pub(crate) fn render_literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Integer(n) => write!(out, "{n}").unwrap(),
        Literal::Decimal(d) => write!(out, "{d}").unwrap(),
        Literal::String(s) => {
            out.push('\'');
            out.push_str(&s.replace('\'', "''"));
            out.push('\'');
        }
        Literal::Boolean(true) => out.push_str("TRUE"),
        Literal::Boolean(false) => out.push_str("FALSE"),
    }
}
