//! Arbitrary query trees for round-trip testing. Trees are syntactically
//! well-formed but need not validate against any contract.

use proptest::prelude::*;

use dpgate::executor::Decimal2;
use dpgate::sqlguard::ast::{
    Aggregate, AggregateArg, AggregateFn, ColumnRef, CompareOp, Direction, Join, JoinKind, Literal, OrderExpr,
    OrderItem, Predicate, QueryAst, SelectExpr, SelectItem, Span, TableRef,
};
use dpgate::sqlguard::is_identifier;

pub fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,7}".prop_filter("reserved word", |s| is_identifier(s))
}

pub fn column_ref() -> impl Strategy<Value = ColumnRef> {
    (prop::option::of(ident()), ident()).prop_map(|(table, column)| ColumnRef {
        table,
        column,
        span: Span::default(),
    })
}

pub fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::Integer),
        (-1_000_000_000_000_000i64..1_000_000_000_000_000).prop_map(|c| Literal::Decimal(Decimal2::from_cents(c))),
        "\\PC{0,10}".prop_map(Literal::String),
        any::<bool>().prop_map(Literal::Boolean),
    ]
}

fn compare_op() -> impl Strategy<Value = CompareOp> {
    prop::sample::select(CompareOp::ALL.to_vec())
}

pub fn predicate() -> impl Strategy<Value = Predicate> {
    let leaf = (column_ref(), compare_op(), literal()).prop_map(|(column, op, value)| Predicate::Compare {
        column,
        op,
        value,
    });
    leaf.prop_recursive(4, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| l.and(r)),
            (inner.clone(), inner).prop_map(|(l, r)| l.or(r)),
        ]
    })
}

fn select_item() -> impl Strategy<Value = SelectItem> {
    let aggregate = (
        prop::sample::select(AggregateFn::ALL.to_vec()),
        column_ref(),
        any::<bool>(),
    )
        .prop_map(|(func, col, star)| {
            let arg = if star && func == AggregateFn::Count {
                AggregateArg::Star
            } else {
                AggregateArg::Column(col)
            };
            SelectExpr::Aggregate(Aggregate {
                func,
                arg,
                span: Span::default(),
            })
        });
    let expr = prop_oneof![column_ref().prop_map(SelectExpr::Column), aggregate];
    (expr, prop::option::of(ident())).prop_map(|(expr, alias)| SelectItem { expr, alias })
}

fn table_ref() -> impl Strategy<Value = TableRef> {
    ident().prop_map(|name| TableRef {
        name,
        span: Span::default(),
    })
}

fn join() -> impl Strategy<Value = Join> {
    (table_ref(), column_ref(), column_ref()).prop_map(|(table, left, right)| Join {
        kind: JoinKind::Inner,
        table,
        left,
        right,
    })
}

/// Order keys are drawn as columns and then, where the parser would read
/// them as an alias reference, turned into one.
fn order_item() -> impl Strategy<Value = (ColumnRef, bool, Option<usize>)> {
    (column_ref(), any::<bool>(), prop::option::of(0usize..4))
}

pub fn query() -> impl Strategy<Value = QueryAst> {
    (
        prop::collection::vec(select_item(), 1..5),
        table_ref(),
        prop::option::of(join()),
        prop::option::of(predicate()),
        prop::collection::vec(column_ref(), 0..3),
        prop::collection::vec(order_item(), 0..3),
        prop::option::of(1u64..=u64::MAX),
    )
        .prop_map(
            |(select_items, from_table, join, where_clause, group_by, order, limit)| {
                let aliases: Vec<&String> = select_items.iter().filter_map(|s| s.alias.as_ref()).collect();
                let order_by = order
                    .into_iter()
                    .map(|(col, desc, alias_pick)| {
                        let direction = if desc { Direction::Desc } else { Direction::Asc };
                        let expr = match alias_pick {
                            Some(i) if !aliases.is_empty() => OrderExpr::Alias(aliases[i % aliases.len()].clone()),
                            _ if col.table.is_none() && aliases.contains(&&col.column) => OrderExpr::Alias(col.column),
                            _ => OrderExpr::Column(col),
                        };
                        OrderItem { expr, direction }
                    })
                    .collect();
                QueryAst {
                    select_items,
                    from_table,
                    join,
                    where_clause,
                    group_by,
                    order_by,
                    limit,
                }
            },
        )
}
