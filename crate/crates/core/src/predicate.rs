//! Conjunctive comparison predicates over attribute values.

use alloc::string::String;
use core::cmp::Ordering;

use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CmpOp {
    Eq = 0,
    Ne = 1,
    Lt = 2,
    Le = 3,
    Gt = 4,
    Ge = 5,
}

impl CmpOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "==" | "=" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => CmpOp::Eq,
            1 => CmpOp::Ne,
            2 => CmpOp::Lt,
            3 => CmpOp::Le,
            4 => CmpOp::Gt,
            5 => CmpOp::Ge,
            _ => return None,
        })
    }

    #[inline]
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// `column op literal`. The literal has already been coerced to the
/// column's kind.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub literal: Value,
}

impl Predicate {
    pub fn new(column: impl Into<String>, op: CmpOp, literal: Value) -> Self {
        Predicate {
            column: column.into(),
            op,
            literal,
        }
    }

    /// Evaluates against the column's value; a missing value (dangling
    /// vertex) never satisfies a predicate.
    #[inline]
    pub fn eval(&self, value: Option<&Value>) -> bool {
        match value {
            Some(v) if v.kind() == self.literal.kind() => self.op.holds(v.cmp(&self.literal)),
            _ => false,
        }
    }
}

/// Evaluates a conjunction, fetching each column through `lookup`.
pub fn eval_all<'a, F>(preds: &[Predicate], mut lookup: F) -> bool
where
    F: FnMut(&str) -> Option<&'a Value>,
{
    preds.iter().all(|p| p.eval(lookup(&p.column)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operators() {
        let p = |op| Predicate::new("x", op, Value::Int64(5));
        let v = Value::Int64(5);
        assert!(p(CmpOp::Eq).eval(Some(&v)));
        assert!(!p(CmpOp::Ne).eval(Some(&v)));
        assert!(p(CmpOp::Le).eval(Some(&v)));
        assert!(p(CmpOp::Ge).eval(Some(&v)));
        assert!(!p(CmpOp::Lt).eval(Some(&v)));
        assert!(p(CmpOp::Gt).eval(Some(&Value::Int64(6))));
    }

    #[test]
    fn missing_or_mismatched_is_false() {
        let p = Predicate::new("name", CmpOp::Ne, Value::Str("Music".into()));
        assert!(!p.eval(None));
        assert!(!p.eval(Some(&Value::Int64(1))));
        assert!(p.eval(Some(&Value::Str("Jazz".into()))));
    }

    #[test]
    fn op_round_trip() {
        for tag in 0..6 {
            let op = CmpOp::from_tag(tag).unwrap();
            assert_eq!(CmpOp::parse(op.symbol()), Some(op));
        }
    }
}
