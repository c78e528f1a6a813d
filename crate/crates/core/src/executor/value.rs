use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Serialize, Serializer};

use crate::catalog::ValueType;
use crate::sqlguard::ast::Literal;

/// Exact fixed-point number with two fraction digits, stored in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal2(i64);

impl Decimal2 {
    pub const fn from_cents(cents: i64) -> Self {
        Self(cents)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    /// Accepts `[-]digits[.d[d]]`. More than two fraction digits is an error,
    /// never a rounding.
    pub fn parse(s: &str) -> Option<Self> {
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((int, frac)) => (int, frac),
            None => (body, ""),
        };
        if int.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 2
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || (body.contains('.') && frac.is_empty())
        {
            return None;
        }
        let whole: i64 = int.parse().ok()?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().ok()? * 10,
            _ => frac.parse().ok()?,
        };
        let magnitude = whole.checked_mul(100)?.checked_add(frac_cents)?;
        Some(Self(if negative { -magnitude } else { magnitude }))
    }
}

impl fmt::Display for Decimal2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Decimal2 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Strict `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// A typed cell. There is no NULL.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Integer(i64),
    Decimal(Decimal2),
    Text(String),
    Boolean(bool),
    /// Validated `YYYY-MM-DD`; compared lexically.
    Date(String),
}

impl Value {
    pub fn parse(value_type: ValueType, raw: &str) -> Option<Value> {
        match value_type {
            ValueType::Integer => raw.parse().ok().map(Value::Integer),
            ValueType::Decimal2 => Decimal2::parse(raw).map(Value::Decimal),
            ValueType::Text => Some(Value::Text(raw.to_string())),
            ValueType::Boolean => match raw {
                "true" => Some(Value::Boolean(true)),
                "false" => Some(Value::Boolean(false)),
                _ => None,
            },
            ValueType::Date => parse_date(raw).map(|_| Value::Date(raw.to_string())),
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Integer(_) => ValueType::Integer,
            Value::Decimal(_) => ValueType::Decimal2,
            Value::Text(_) => ValueType::Text,
            Value::Boolean(_) => ValueType::Boolean,
            Value::Date(_) => ValueType::Date,
        }
    }

    fn as_cents(&self) -> Option<i128> {
        match self {
            Value::Integer(n) => Some(i128::from(*n) * 100),
            Value::Decimal(d) => Some(i128::from(d.cents())),
            _ => None,
        }
    }

    /// Total order within one value type: numbers by value, text bytewise,
    /// dates lexically, `false < true`. Mixed numeric types compare by value.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) | (Value::Date(a), Value::Date(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Value::Boolean(a), Value::Boolean(b)) => Some(a.cmp(b)),
            _ => Some(self.as_cents()?.cmp(&other.as_cents()?)),
        }
    }

    /// Orders a cell against a WHERE literal; `None` when the types cannot
    /// be compared (validation rules those queries out).
    pub fn compare_literal(&self, literal: &Literal) -> Option<Ordering> {
        match (self, literal) {
            (Value::Text(a) | Value::Date(a), Literal::String(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Value::Boolean(a), Literal::Boolean(b)) => Some(a.cmp(b)),
            (_, Literal::Integer(n)) => Some(self.as_cents()?.cmp(&(i128::from(*n) * 100))),
            (_, Literal::Decimal(d)) => Some(self.as_cents()?.cmp(&i128::from(d.cents()))),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(n) => write!(f, "{n}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Text(s) | Value::Date(s) => f.write_str(s),
            Value::Boolean(b) => write!(f, "{b}"),
        }
    }
}

/// Integers and booleans serialize as JSON numbers and booleans; decimals,
/// text and dates as strings (decimals keep both fraction digits).
impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Integer(n) => serializer.serialize_i64(*n),
            Value::Decimal(d) => d.serialize(serializer),
            Value::Text(s) | Value::Date(s) => serializer.serialize_str(s),
            Value::Boolean(b) => serializer.serialize_bool(*b),
        }
    }
}
