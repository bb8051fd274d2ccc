use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::syntax::{BinOp, CmpOp};

/// Longest list a program may build.
pub const MAX_LIST_LEN: usize = 100_000;

/// A MiniLang runtime value. Lists have value semantics: assignment copies.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    List(Vec<Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::List(_) => "list",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Int(n) => *n != 0,
            Value::List(xs) => !xs.is_empty(),
        }
    }

    /// Integer view; booleans count as 0/1.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Bool(b) => Some(i64::from(*b)),
            Value::Int(n) => Some(*n),
            Value::List(_) => None,
        }
    }

    /// Equality as the `==` operator sees it (`True == 1`).
    pub fn loose_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::List(a), Value::List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.loose_eq(y)),
            (Value::List(_), _) | (_, Value::List(_)) => false,
            _ => self.as_int() == other.as_int(),
        }
    }

    /// Ordering for `<`, `max`, `min`: numbers numerically, lists
    /// lexicographically.
    pub fn compare(&self, other: &Value) -> Result<Ordering, String> {
        match (self, other) {
            (Value::List(a), Value::List(b)) => {
                for (x, y) in a.iter().zip(b) {
                    match x.compare(y)? {
                        Ordering::Equal => {}
                        ord => return Ok(ord),
                    }
                }
                Ok(a.len().cmp(&b.len()))
            }
            (Value::List(_), _) | (_, Value::List(_)) => Err(format!(
                "'<' not supported between instances of '{}' and '{}'",
                self.type_name(),
                other.type_name()
            )),
            _ => Ok(self.as_int().cmp(&other.as_int())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Int(n) => write!(f, "{n}"),
            Value::List(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

fn overflow() -> String {
    "integer overflow".to_string()
}

fn repeat(xs: &[Value], n: i64) -> Result<Value, String> {
    let n = n.max(0) as usize;
    if xs.len().saturating_mul(n) > MAX_LIST_LEN {
        return Err("list too large".into());
    }
    Ok(Value::List(xs.iter().cloned().cycle().take(xs.len() * n).collect()))
}

fn floor_div(a: i64, b: i64) -> Result<i64, String> {
    if b == 0 {
        return Err("integer division or modulo by zero".into());
    }
    let q = a.checked_div(b).ok_or_else(overflow)?;
    Ok(if a % b != 0 && ((a < 0) != (b < 0)) { q - 1 } else { q })
}

fn floor_mod(a: i64, b: i64) -> Result<i64, String> {
    if b == 0 {
        return Err("integer division or modulo by zero".into());
    }
    let r = a.checked_rem(b).unwrap_or(0);
    Ok(if r != 0 && ((r < 0) != (b < 0)) { r + b } else { r })
}

pub fn binary(op: BinOp, a: &Value, b: &Value) -> Result<Value, String> {
    match (op, a, b) {
        (BinOp::Add, Value::List(x), Value::List(y)) => {
            if x.len() + y.len() > MAX_LIST_LEN {
                return Err("list too large".into());
            }
            Ok(Value::List(x.iter().chain(y).cloned().collect()))
        }
        (BinOp::Mul, Value::List(xs), n) | (BinOp::Mul, n, Value::List(xs)) if !matches!(n, Value::List(_)) => {
            repeat(xs, n.as_int().expect("non-list is numeric"))
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_int(), b.as_int()) else {
                return Err(format!(
                    "unsupported operand type(s) for {}: '{}' and '{}'",
                    op.symbol(),
                    a.type_name(),
                    b.type_name()
                ));
            };
            let r = match op {
                BinOp::Add => x.checked_add(y).ok_or_else(overflow)?,
                BinOp::Sub => x.checked_sub(y).ok_or_else(overflow)?,
                BinOp::Mul => x.checked_mul(y).ok_or_else(overflow)?,
                BinOp::FloorDiv => floor_div(x, y)?,
                BinOp::Mod => floor_mod(x, y)?,
            };
            Ok(Value::Int(r))
        }
    }
}

pub fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, String> {
    Ok(match op {
        CmpOp::Eq => a.loose_eq(b),
        CmpOp::Ne => !a.loose_eq(b),
        CmpOp::Lt => a.compare(b)? == Ordering::Less,
        CmpOp::Le => a.compare(b)? != Ordering::Greater,
        CmpOp::Gt => a.compare(b)? == Ordering::Greater,
        CmpOp::Ge => a.compare(b)? != Ordering::Less,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_semantics_match_python() {
        let cases = [(7, 2, 3, 1), (-7, 2, -4, 1), (7, -2, -4, -1), (-7, -2, 3, -1), (6, 3, 2, 0)];
        for (a, b, q, r) in cases {
            assert_eq!(floor_div(a, b).unwrap(), q, "{a} // {b}");
            assert_eq!(floor_mod(a, b).unwrap(), r, "{a} % {b}");
        }
        assert!(floor_div(1, 0).is_err());
        assert!(floor_div(i64::MIN, -1).is_err());
    }

    #[test]
    fn list_arithmetic() {
        let xs = Value::List(vec![Value::Int(1)]);
        assert_eq!(binary(BinOp::Mul, &xs, &Value::Int(3)).unwrap(), Value::List(vec![Value::Int(1); 3]));
        assert_eq!(binary(BinOp::Mul, &Value::Int(-1), &xs).unwrap(), Value::List(vec![]));
        assert_eq!(binary(BinOp::Add, &xs, &xs).unwrap(), Value::List(vec![Value::Int(1); 2]));
        assert!(binary(BinOp::Sub, &xs, &xs).is_err());
        assert!(binary(BinOp::Mul, &xs, &Value::Int(1_000_000)).is_err());
    }

    #[test]
    fn comparisons() {
        assert!(compare(CmpOp::Eq, &Value::Bool(true), &Value::Int(1)).unwrap());
        assert!(compare(CmpOp::Lt, &Value::List(vec![Value::Int(1)]), &Value::List(vec![Value::Int(1), Value::Int(0)])).unwrap());
        assert!(compare(CmpOp::Lt, &Value::Int(1), &Value::List(vec![])).is_err());
        assert!(!compare(CmpOp::Eq, &Value::Int(1), &Value::List(vec![])).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let v: Value = serde_json::from_str("[1,[true,-2],[]]").unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "[1,[true,-2],[]]");
        assert_eq!(v.to_string(), "[1, [True, -2], []]");
    }
}
