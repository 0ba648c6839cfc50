use std::cmp::Ordering;

use crate::datum::{compare_values, Value};
use crate::error::{Error, Result};

use super::bind::BoundExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn lookup(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "COUNT" => AggFn::Count,
            "SUM" => AggFn::Sum,
            "AVG" => AggFn::Avg,
            "MIN" => AggFn::Min,
            "MAX" => AggFn::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggSpec {
    pub func: AggFn,
    /// `None` for `COUNT(*)`.
    pub arg: Option<BoundExpr>,
}

/// Running state of one aggregate over one group. Null inputs are ignored.
#[derive(Debug, Clone)]
pub enum Accumulator {
    Count(i64),
    Sum(Sum),
    Avg { sum: f64, n: i64 },
    Extreme { best: Value, want: Ordering },
}

#[derive(Debug, Clone)]
pub enum Sum {
    Empty,
    Int(i64),
    Real(f64),
}

impl Accumulator {
    pub fn new(func: AggFn) -> Self {
        match func {
            AggFn::Count => Accumulator::Count(0),
            AggFn::Sum => Accumulator::Sum(Sum::Empty),
            // -0.0 is the additive identity; 0.0 would turn a lone -0.0 into 0.0.
            AggFn::Avg => Accumulator::Avg { sum: -0.0, n: 0 },
            AggFn::Min => Accumulator::Extreme {
                best: Value::Null,
                want: Ordering::Less,
            },
            AggFn::Max => Accumulator::Extreme {
                best: Value::Null,
                want: Ordering::Greater,
            },
        }
    }

    /// Feeds one input; `None` stands for a `COUNT(*)` row.
    pub fn update(&mut self, input: Option<&Value>) -> Result<()> {
        let v = match input {
            None => {
                if let Accumulator::Count(n) = self {
                    *n += 1;
                }
                return Ok(());
            }
            Some(Value::Null) => return Ok(()),
            Some(v) => v,
        };
        match self {
            Accumulator::Count(n) => *n += 1,
            Accumulator::Sum(sum) => {
                *sum = match (&*sum, v) {
                    (Sum::Empty, Value::Integer(i)) => Sum::Int(*i),
                    (Sum::Empty, Value::Real(r)) => Sum::Real(*r),
                    (Sum::Int(a), Value::Integer(b)) => match a.checked_add(*b) {
                        Some(s) => Sum::Int(s),
                        None => Sum::Real(*a as f64 + *b as f64),
                    },
                    (Sum::Int(a), Value::Real(b)) => Sum::Real(*a as f64 + b),
                    (Sum::Real(a), Value::Integer(b)) => Sum::Real(a + *b as f64),
                    (Sum::Real(a), Value::Real(b)) => Sum::Real(a + b),
                    (_, other) => {
                        return Err(Error::TypeMismatch(format!("SUM of {}", other.type_name())))
                    }
                };
            }
            Accumulator::Avg { sum, n } => {
                let x = match v {
                    Value::Integer(i) => *i as f64,
                    Value::Real(r) => *r,
                    other => {
                        return Err(Error::TypeMismatch(format!("AVG of {}", other.type_name())))
                    }
                };
                *sum += x;
                *n += 1;
            }
            Accumulator::Extreme { best, want } => {
                if best.is_null() || compare_values(v, best) == *want {
                    *best = v.clone();
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Value {
        match self {
            Accumulator::Count(n) => Value::Integer(*n),
            Accumulator::Sum(Sum::Empty) => Value::Null,
            Accumulator::Sum(Sum::Int(i)) => Value::Integer(*i),
            Accumulator::Sum(Sum::Real(r)) => Value::Real(*r),
            Accumulator::Avg { n: 0, .. } => Value::Null,
            Accumulator::Avg { sum, n } => Value::Real(sum / *n as f64),
            Accumulator::Extreme { best, .. } => best.clone(),
        }
    }
}
