//! Typed scalar values shared by the store, the query IR and the sketch.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Column kinds supported by the store. Dates are kept as days since
/// 1970-01-01 so that every kind compares through the same path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Float,
    Date,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Integer => "integer",
            ColumnKind::Float => "float",
            ColumnKind::Date => "date",
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Float(f64),
    /// Days since 1970-01-01.
    Date(i32),
}

const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => unreachable!(),
};

/// Converts a calendar date to days since the Unix epoch.
pub fn days_from_date(date: NaiveDate) -> i32 {
    (date - EPOCH).num_days() as i32
}

pub fn date_from_days(days: i32) -> NaiveDate {
    EPOCH + chrono::Duration::days(days as i64)
}

/// Days since epoch of January 1st of `year`.
pub fn year_start_days(year: i32) -> i32 {
    days_from_date(NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year"))
}

pub fn year_of_days(days: i32) -> i32 {
    date_from_days(days).year()
}

/// Parses an ISO-8601 `YYYY-MM-DD` date into days since epoch.
pub fn parse_date(text: &str) -> Option<i32> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .ok()
        .map(days_from_date)
}

impl Value {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Value::Int(_) => ColumnKind::Integer,
            Value::Float(_) => ColumnKind::Float,
            Value::Date(_) => ColumnKind::Date,
        }
    }

    /// Parses `text` as a value of `kind`. Non-finite floats are rejected.
    pub fn parse(text: &str, kind: ColumnKind) -> Option<Value> {
        let text = text.trim();
        match kind {
            ColumnKind::Integer => text.parse().ok().map(Value::Int),
            ColumnKind::Float => text.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Float),
            ColumnKind::Date => parse_date(text).map(Value::Date),
        }
    }

    /// Builds a value of `kind` from a real number, rounding for the
    /// integral kinds.
    pub fn from_f64(kind: ColumnKind, v: f64) -> Value {
        match kind {
            ColumnKind::Integer => Value::Int(v.round() as i64),
            ColumnKind::Float => Value::Float(v),
            ColumnKind::Date => Value::Date(v.round() as i32),
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Int(v) => v as f64,
            Value::Float(v) => v,
            Value::Date(v) => v as f64,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Date(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order: values of the same kind compare naturally (floats through
/// `total_cmp`); mixed kinds order by kind.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Int(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Date(v) => v.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Date(d) => write!(f, "{}", date_from_days(*d).format("%Y-%m-%d")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_round_trip_through_days() {
        let d = parse_date("1995-03-17").unwrap();
        assert_eq!(Value::Date(d).to_string(), "1995-03-17");
        assert_eq!(parse_date("1970-01-01"), Some(0));
        assert_eq!(year_of_days(year_start_days(1994)), 1994);
        assert_eq!(year_of_days(year_start_days(1994) - 1), 1993);
    }

    #[test]
    fn parse_respects_kind() {
        assert_eq!(Value::parse("42", ColumnKind::Integer), Some(Value::Int(42)));
        assert_eq!(Value::parse("4.5", ColumnKind::Integer), None);
        assert_eq!(Value::parse("abc", ColumnKind::Float), None);
        assert_eq!(Value::parse("NaN", ColumnKind::Float), None);
        assert_eq!(Value::parse("2.5", ColumnKind::Float), Some(Value::Float(2.5)));
    }

    #[test]
    fn float_display_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-9, 123456.789] {
            let text = Value::Float(v).to_string();
            assert_eq!(Value::parse(&text, ColumnKind::Float), Some(Value::Float(v)));
        }
    }
}
