//! Random small tables plus a random query that validates against them.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use dpgate::catalog::{Classification, ColumnDef, ContractTerms, DataContract, ValueType};
use dpgate::executor::dataset::Table;
use dpgate::executor::{Decimal2, Value};
use dpgate::governance::PurposeCategory;
use dpgate::sqlguard::ast::{
    Aggregate, AggregateArg, AggregateFn, ColumnRef, CompareOp, Direction, Join, JoinKind, Literal, OrderExpr,
    OrderItem, Predicate, QueryAst, SelectExpr, SelectItem, Span, TableRef,
};

pub type Tables = BTreeMap<String, Table>;

pub struct ExecCase {
    pub seed: u64,
    pub contract: DataContract,
    pub tables: Tables,
    pub ast: QueryAst,
}

const TEXTS: [&str; 6] = ["a", "b", "B", "ä", "x\"y", ""];
const DATES: [&str; 3] = ["2023-12-31", "2024-01-01", "2024-02-29"];
const TYPES: [ValueType; 5] = [
    ValueType::Integer,
    ValueType::Decimal2,
    ValueType::Text,
    ValueType::Boolean,
    ValueType::Date,
];

fn random_value(rng: &mut StdRng, t: ValueType) -> Value {
    match t {
        ValueType::Integer => Value::Integer(rng.random_range(-3..=3)),
        ValueType::Decimal2 => Value::Decimal(Decimal2::from_cents(
            *[-250, -5, 0, 5, 105, 250, 999, -999].choose(rng).unwrap(),
        )),
        ValueType::Text => Value::Text(TEXTS.choose(rng).unwrap().to_string()),
        ValueType::Boolean => Value::Boolean(rng.random_bool(0.5)),
        ValueType::Date => Value::Date(DATES.choose(rng).unwrap().to_string()),
    }
}

fn random_literal(rng: &mut StdRng, t: ValueType) -> Literal {
    match t {
        ValueType::Integer | ValueType::Decimal2 => {
            if rng.random_bool(0.5) {
                Literal::Integer(rng.random_range(-3..=3))
            } else {
                Literal::Decimal(Decimal2::from_cents(rng.random_range(-300..=300)))
            }
        }
        ValueType::Text => Literal::String([TEXTS.as_slice(), &["c"]].concat().choose(rng).unwrap().to_string()),
        ValueType::Boolean => Literal::Boolean(rng.random_bool(0.5)),
        ValueType::Date => Literal::String(DATES.choose(rng).unwrap().to_string()),
    }
}

/// A column in scope: table name, column name, type.
#[derive(Clone)]
struct Col {
    table: String,
    name: String,
    value_type: ValueType,
}

struct Scope {
    cols: Vec<Col>,
}

impl Scope {
    fn reference(&self, rng: &mut StdRng, col: &Col) -> ColumnRef {
        let ambiguous = self.cols.iter().filter(|c| c.name == col.name).count() > 1;
        let table = (ambiguous || rng.random_bool(0.4)).then(|| col.table.clone());
        ColumnRef {
            table,
            column: col.name.clone(),
            span: Span::default(),
        }
    }

    fn pick(&self, rng: &mut StdRng) -> Col {
        self.cols.choose(rng).unwrap().clone()
    }
}

fn random_predicate(rng: &mut StdRng, scope: &Scope, depth: u32) -> Predicate {
    if depth == 0 || rng.random_bool(0.5) {
        let col = scope.pick(rng);
        let op = *CompareOp::ALL.choose(rng).unwrap();
        let value = random_literal(rng, col.value_type);
        return Predicate::compare(scope.reference(rng, &col), op, value);
    }
    let l = random_predicate(rng, scope, depth - 1);
    let r = random_predicate(rng, scope, depth - 1);
    if rng.random_bool(0.5) {
        l.and(r)
    } else {
        l.or(r)
    }
}

fn make_table(rng: &mut StdRng, name: &str, prefix: &str, shared: Option<&ColumnDef>) -> (Vec<ColumnDef>, Table) {
    let width = rng.random_range(1..=4);
    let mut columns: Vec<ColumnDef> = (0..width)
        .map(|i| ColumnDef {
            name: format!("{prefix}{i}"),
            value_type: *TYPES.choose(rng).unwrap(),
            classification: *Classification::ALL.choose(rng).unwrap(),
            description: String::new(),
        })
        .collect();
    // Occasionally reuse a column name from the other table so that bare
    // references would be ambiguous.
    if let Some(shared) = shared {
        if rng.random_bool(0.3) {
            columns[0].name = shared.name.clone();
        }
    }
    let height = rng.random_range(0..=20);
    let rows = (0..height)
        .map(|_| columns.iter().map(|c| random_value(rng, c.value_type)).collect())
        .collect();
    let table = Table::new(name, columns.clone(), rows).expect("generated rows fit their columns");
    (columns, table)
}

pub fn gen_case(seed: u64) -> ExecCase {
    let mut rng = StdRng::seed_from_u64(seed);
    let two_tables = rng.random_bool(0.5);

    let (cols0, t0) = make_table(&mut rng, "t0", "a", None);
    let mut tables = BTreeMap::from([("t0".to_string(), t0)]);
    let mut contract_tables = BTreeMap::from([("t0".to_string(), cols0.clone())]);
    if two_tables {
        let (cols1, t1) = make_table(&mut rng, "t1", "b", Some(&cols0[0]));
        tables.insert("t1".into(), t1);
        contract_tables.insert("t1".into(), cols1);
    }

    let allowed: BTreeMap<Classification, BTreeSet<PurposeCategory>> = Classification::ALL
        .iter()
        .map(|c| (*c, PurposeCategory::ALL.into_iter().collect()))
        .collect();
    let contract = DataContract {
        id: "generated".into(),
        tables: contract_tables,
        terms: ContractTerms {
            allowed_purposes: allowed,
            row_limit: rng.random_range(1..=30),
            notes: String::new(),
        },
    };

    let as_cols = |table: &str| -> Vec<Col> {
        contract.tables[table]
            .iter()
            .map(|c| Col {
                table: table.to_string(),
                name: c.name.clone(),
                value_type: c.value_type,
            })
            .collect()
    };

    let mut scope = Scope { cols: as_cols("t0") };
    let mut join = None;
    if two_tables && rng.random_bool(0.7) {
        let right = as_cols("t1");
        let pairs: Vec<(Col, Col)> = scope
            .cols
            .iter()
            .flat_map(|l| right.iter().map(move |r| (l.clone(), r.clone())))
            .filter(|(l, r)| l.value_type == r.value_type)
            .collect();
        if let Some((l, r)) = pairs.choose(&mut rng).cloned() {
            scope.cols.extend(right);
            let (left, right) = (scope.reference(&mut rng, &l), scope.reference(&mut rng, &r));
            let (left, right) = if rng.random_bool(0.5) {
                (left, right)
            } else {
                (right, left)
            };
            join = Some(Join {
                kind: JoinKind::Inner,
                table: TableRef::new("t1"),
                left,
                right,
            });
        }
    }

    let grouped = rng.random_bool(0.5);
    let mut select_items = Vec::new();
    let mut group_by = Vec::new();
    let mut group_cols: Vec<Col> = Vec::new();
    if grouped {
        let n_keys = rng.random_range(0..=2.min(scope.cols.len()));
        let mut candidates = scope.cols.clone();
        for _ in 0..n_keys {
            let i = rng.random_range(0..candidates.len());
            let col = candidates.remove(i);
            group_by.push(scope.reference(&mut rng, &col));
            group_cols.push(col);
        }
        for col in &group_cols {
            if rng.random_bool(0.7) {
                select_items.push(SelectExpr::Column(scope.reference(&mut rng, col)));
            }
        }
        let n_aggs = rng.random_range(if group_cols.is_empty() { 1 } else { 0 }..=3);
        for _ in 0..n_aggs {
            let col = scope.pick(&mut rng);
            let numeric = matches!(col.value_type, ValueType::Integer | ValueType::Decimal2);
            let choices: &[AggregateFn] = if numeric {
                &AggregateFn::ALL
            } else {
                &[AggregateFn::Count, AggregateFn::Min, AggregateFn::Max]
            };
            let func = *choices.choose(&mut rng).unwrap();
            let arg = if func == AggregateFn::Count && rng.random_bool(0.5) {
                AggregateArg::Star
            } else {
                AggregateArg::Column(scope.reference(&mut rng, &col))
            };
            select_items.push(SelectExpr::Aggregate(Aggregate {
                func,
                arg,
                span: Span::default(),
            }));
        }
        if select_items.is_empty() {
            select_items.push(SelectExpr::Column(scope.reference(&mut rng, &group_cols[0])));
        }
    } else {
        for _ in 0..rng.random_range(1..=4) {
            let col = scope.pick(&mut rng);
            select_items.push(SelectExpr::Column(scope.reference(&mut rng, &col)));
        }
    }
    let select_items: Vec<SelectItem> = select_items
        .into_iter()
        .enumerate()
        .map(|(i, expr)| SelectItem {
            expr,
            alias: rng.random_bool(0.4).then(|| format!("o{i}")),
        })
        .collect();

    let where_clause = rng.random_bool(0.6).then(|| random_predicate(&mut rng, &scope, 2));

    let mut order_by = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let aliases: Vec<&String> = select_items.iter().filter_map(|s| s.alias.as_ref()).collect();
        let sortable = if grouped { &group_cols } else { &scope.cols };
        let expr = if !aliases.is_empty() && (sortable.is_empty() || rng.random_bool(0.5)) {
            OrderExpr::Alias(aliases.choose(&mut rng).unwrap().to_string())
        } else if let Some(col) = sortable.choose(&mut rng) {
            OrderExpr::Column(scope.reference(&mut rng, col))
        } else {
            continue;
        };
        let direction = if rng.random_bool(0.5) {
            Direction::Asc
        } else {
            Direction::Desc
        };
        order_by.push(OrderItem { expr, direction });
    }

    let limit = rng.random_bool(0.4).then(|| rng.random_range(1..=25));

    ExecCase {
        seed,
        contract,
        tables,
        ast: QueryAst {
            select_items,
            from_table: TableRef::new("t0"),
            join,
            where_clause,
            group_by,
            order_by,
            limit,
        },
    }
}
