use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{CoreError, Result};

/// Physical type of a column. The discriminants are the on-disk tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ColumnKind {
    Int64 = 0,
    Float64 = 1,
    String = 2,
    /// Days since 1970-01-01.
    Date32 = 3,
    Bool = 4,
}

impl ColumnKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => ColumnKind::Int64,
            1 => ColumnKind::Float64,
            2 => ColumnKind::String,
            3 => ColumnKind::Date32,
            4 => ColumnKind::Bool,
            _ => return None,
        })
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Int64 => "INT64",
            ColumnKind::Float64 => "FLOAT64",
            ColumnKind::String => "STRING",
            ColumnKind::Date32 => "DATE32",
            ColumnKind::Bool => "BOOL",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "INT64" => ColumnKind::Int64,
            "FLOAT64" => ColumnKind::Float64,
            "STRING" => ColumnKind::String,
            "DATE32" => ColumnKind::Date32,
            "BOOL" => ColumnKind::Bool,
            _ => return None,
        })
    }

    /// Width of one PLAIN-encoded value, `None` for variable-length kinds.
    pub fn fixed_width(self) -> Option<usize> {
        match self {
            ColumnKind::Int64 | ColumnKind::Float64 => Some(8),
            ColumnKind::Date32 => Some(4),
            ColumnKind::Bool => Some(1),
            ColumnKind::String => None,
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single typed cell value.
///
/// `Ord` is total: values of different kinds order by kind tag, floats use
/// IEEE total ordering. Predicates only ever compare values of one kind.
#[derive(Clone, Debug)]
pub enum Value {
    Int64(i64),
    Float64(f64),
    Str(String),
    Date32(i32),
    Bool(bool),
}

impl Value {
    pub fn kind(&self) -> ColumnKind {
        match self {
            Value::Int64(_) => ColumnKind::Int64,
            Value::Float64(_) => ColumnKind::Float64,
            Value::Str(_) => ColumnKind::String,
            Value::Date32(_) => ColumnKind::Date32,
            Value::Bool(_) => ColumnKind::Bool,
        }
    }

    pub fn expect_kind(&self, kind: ColumnKind) -> Result<()> {
        if self.kind() == kind {
            Ok(())
        } else {
            Err(CoreError::KindMismatch {
                expected: kind.name(),
                found: self.kind().name(),
            })
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int64(v) => Some(v),
            Value::Date32(v) => Some(v as i64),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int64(v) => Some(v as f64),
            Value::Float64(v) => Some(v),
            Value::Date32(v) => Some(v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Approximate in-memory footprint, used for cache accounting.
    pub fn heap_size(&self) -> usize {
        match self {
            Value::Str(s) => s.len(),
            _ => 0,
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

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int64(a), Value::Int64(b)) => a.cmp(b),
            (Value::Float64(a), Value::Float64(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Date32(a), Value::Date32(b)) => a.cmp(b),
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (a, b) => a.kind().tag().cmp(&b.kind().tag()),
        }
    }
}

impl core::hash::Hash for Value {
    fn hash<H: core::hash::Hasher>(&self, state: &mut H) {
        self.kind().tag().hash(state);
        match self {
            Value::Int64(v) => v.hash(state),
            Value::Float64(v) => v.to_bits().hash(state),
            Value::Str(v) => v.hash(state),
            Value::Date32(v) => v.hash(state),
            Value::Bool(v) => v.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int64(v) => write!(f, "{v}"),
            Value::Float64(v) => write!(f, "{v}"),
            Value::Str(v) => f.write_str(v),
            Value::Date32(v) => {
                let (y, m, d) = civil_from_days(*v as i64);
                write!(f, "{y:04}-{m:02}-{d:02}")
            }
            Value::Bool(v) => write!(f, "{v}"),
        }
    }
}

/// Days since the epoch for a proleptic Gregorian date.
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let m = m as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

pub fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Parses `YYYY-MM-DD` into days since the epoch.
pub fn parse_date(s: &str) -> Option<i32> {
    let mut it = s.splitn(3, '-');
    let y: i64 = it.next()?.parse().ok()?;
    let m: u32 = it.next()?.parse().ok()?;
    let d: u32 = it.next()?.parse().ok()?;
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    i32::try_from(days_from_civil(y, m, d)).ok()
}
