//! Name resolution and expression evaluation.

use crate::datum::{self, BinOp, ScalarFn, Value};
use crate::error::{Error, Result};
use crate::sql::ast::{is_aggregate_name, ColumnRef, Expr, FnArgs};
use crate::storage::{Column, Table};

use super::aggregate::{AggFn, AggSpec};

/// An expression with every column reference resolved to
/// `(table position, column position)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    Literal(Value),
    Column(usize, usize),
    Neg(Box<BoundExpr>),
    Not(Box<BoundExpr>),
    Binary(BinOp, Box<BoundExpr>, Box<BoundExpr>),
    And(Box<BoundExpr>, Box<BoundExpr>),
    Or(Box<BoundExpr>, Box<BoundExpr>),
    Like(Box<BoundExpr>, Box<BoundExpr>),
    IsNull(Box<BoundExpr>, bool),
    Scalar(ScalarFn, Box<BoundExpr>),
    /// Result of the n-th aggregate of the enclosing query.
    Aggregate(usize),
}

impl BoundExpr {
    /// Highest table position referenced, or `None` for constants.
    pub fn max_table(&self) -> Option<usize> {
        let mut max = None;
        self.visit(&mut |e| {
            if let BoundExpr::Column(t, _) = e {
                max = Some(max.map_or(*t, |m: usize| m.max(*t)));
            }
        });
        max
    }

    pub fn has_aggregate(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, BoundExpr::Aggregate(_)));
        found
    }

    fn visit(&self, f: &mut dyn FnMut(&BoundExpr)) {
        f(self);
        match self {
            BoundExpr::Literal(_) | BoundExpr::Column(..) | BoundExpr::Aggregate(_) => {}
            BoundExpr::Neg(e) | BoundExpr::Not(e) | BoundExpr::IsNull(e, _) | BoundExpr::Scalar(_, e) => {
                e.visit(f)
            }
            BoundExpr::Binary(_, l, r)
            | BoundExpr::And(l, r)
            | BoundExpr::Or(l, r)
            | BoundExpr::Like(l, r) => {
                l.visit(f);
                r.visit(f);
            }
        }
    }

    /// Column references that are not inside an aggregate.
    pub fn free_columns(&self, out: &mut Vec<(usize, usize)>) {
        self.visit(&mut |e| {
            if let BoundExpr::Column(t, c) = e {
                out.push((*t, *c));
            }
        });
    }
}

/// The tables visible to a statement, in FROM order.
pub struct Scope<'a> {
    tables: Vec<(&'a str, &'a [Column])>,
}

impl<'a> Scope<'a> {
    pub fn new() -> Self {
        Scope { tables: Vec::new() }
    }

    pub fn push(&mut self, visible_name: &'a str, table: &'a Table) {
        self.tables.push((visible_name, &table.columns));
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn columns(&self, t: usize) -> &'a [Column] {
        self.tables[t].1
    }

    pub fn resolve(&self, col: &ColumnRef) -> Result<(usize, usize)> {
        let mut found = None;
        for (t, (visible, columns)) in self.tables.iter().enumerate() {
            if let Some(q) = &col.table {
                if !visible.eq_ignore_ascii_case(q) {
                    continue;
                }
            }
            if let Some(c) = columns.iter().position(|c| c.name.eq_ignore_ascii_case(&col.column)) {
                if found.is_some() {
                    return Err(Error::AmbiguousColumn(col.to_string()));
                }
                found = Some((t, c));
            }
        }
        found.ok_or_else(|| Error::UnknownColumn(col.to_string()))
    }

    /// Binds an expression. Aggregate calls are accepted only when `aggs` is
    /// given; their specs are appended there.
    pub fn bind(&self, expr: &Expr, aggs: Option<&mut Vec<AggSpec>>) -> Result<BoundExpr> {
        let mut aggs = aggs;
        self.bind_inner(expr, &mut aggs)
    }

    fn bind_inner(&self, expr: &Expr, aggs: &mut Option<&mut Vec<AggSpec>>) -> Result<BoundExpr> {
        let b = |e: &Expr, aggs: &mut Option<&mut Vec<AggSpec>>| self.bind_inner(e, aggs).map(Box::new);
        Ok(match expr {
            Expr::Literal(v) => BoundExpr::Literal(v.clone()),
            Expr::Column(c) => {
                let (t, c) = self.resolve(c)?;
                BoundExpr::Column(t, c)
            }
            Expr::Neg(e) => BoundExpr::Neg(b(e, aggs)?),
            Expr::Not(e) => BoundExpr::Not(b(e, aggs)?),
            Expr::Binary { op, left, right } => BoundExpr::Binary(*op, b(left, aggs)?, b(right, aggs)?),
            Expr::And(l, r) => BoundExpr::And(b(l, aggs)?, b(r, aggs)?),
            Expr::Or(l, r) => BoundExpr::Or(b(l, aggs)?, b(r, aggs)?),
            Expr::Like { expr, pattern } => BoundExpr::Like(b(expr, aggs)?, b(pattern, aggs)?),
            Expr::IsNull { expr, negated } => BoundExpr::IsNull(b(expr, aggs)?, *negated),
            Expr::Call { name, args } if is_aggregate_name(name) => {
                let Some(specs) = aggs.as_deref_mut() else {
                    return Err(Error::AggregateMisuse(format!("{} not allowed here", name.to_ascii_uppercase())));
                };
                let func = AggFn::lookup(name).expect("aggregate name");
                let arg = match args {
                    FnArgs::Star if func == AggFn::Count => None,
                    FnArgs::List(list) if list.len() == 1 => Some(self.bind(&list[0], None)?),
                    _ => {
                        return Err(Error::AggregateMisuse(format!(
                            "wrong arguments to {}",
                            func.name()
                        )))
                    }
                };
                specs.push(AggSpec { func, arg });
                BoundExpr::Aggregate(specs.len() - 1)
            }
            Expr::Call { name, args } => {
                let func = ScalarFn::lookup(name).ok_or_else(|| Error::UnknownFunction(name.clone()))?;
                match args {
                    FnArgs::List(list) if list.len() == 1 => BoundExpr::Scalar(func, b(&list[0], aggs)?),
                    FnArgs::List(list) => {
                        return Err(Error::TypeMismatch(format!(
                            "{} expects 1 argument, got {}",
                            func.name(),
                            list.len()
                        )))
                    }
                    FnArgs::Star => {
                        return Err(Error::TypeMismatch(format!("{}(*) is not valid", func.name())))
                    }
                }
            }
        })
    }
}

impl Default for Scope<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Evaluates a bound expression against one row per table and the current
/// group's aggregate results.
pub fn eval(expr: &BoundExpr, rows: &[&[Value]], aggs: &[Value]) -> Result<Value> {
    Ok(match expr {
        BoundExpr::Literal(v) => v.clone(),
        BoundExpr::Column(t, c) => rows[*t][*c].clone(),
        BoundExpr::Aggregate(i) => aggs[*i].clone(),
        BoundExpr::Neg(e) => datum::negate(&eval(e, rows, aggs)?)?,
        BoundExpr::Not(e) => match eval(e, rows, aggs)?.truth() {
            None => Value::Null,
            Some(b) => Value::from_bool(!b),
        },
        BoundExpr::Binary(op, l, r) => datum::eval_binop(*op, &eval(l, rows, aggs)?, &eval(r, rows, aggs)?)?,
        BoundExpr::And(l, r) => {
            let left = eval(l, rows, aggs)?.truth();
            if left == Some(false) {
                return Ok(Value::from_bool(false));
            }
            match (left, eval(r, rows, aggs)?.truth()) {
                (_, Some(false)) => Value::from_bool(false),
                (Some(true), Some(true)) => Value::from_bool(true),
                _ => Value::Null,
            }
        }
        BoundExpr::Or(l, r) => {
            let left = eval(l, rows, aggs)?.truth();
            if left == Some(true) {
                return Ok(Value::from_bool(true));
            }
            match (left, eval(r, rows, aggs)?.truth()) {
                (_, Some(true)) => Value::from_bool(true),
                (Some(false), Some(false)) => Value::from_bool(false),
                _ => Value::Null,
            }
        }
        BoundExpr::Like(e, p) => like(&eval(e, rows, aggs)?, &eval(p, rows, aggs)?)?,
        BoundExpr::IsNull(e, negated) => Value::from_bool(eval(e, rows, aggs)?.is_null() != *negated),
        BoundExpr::Scalar(f, e) => datum::apply_scalar(*f, &eval(e, rows, aggs)?)?,
    })
}

/// `subject LIKE pattern` with Null propagation.
pub fn like(subject: &Value, pattern: &Value) -> Result<Value> {
    if subject.is_null() || pattern.is_null() {
        return Ok(Value::Null);
    }
    let pattern = match pattern {
        Value::Text(p) => p.clone(),
        Value::Integer(_) | Value::Real(_) => pattern.to_string().into_bytes(),
        Value::Blob(_) => return Err(Error::TypeMismatch("LIKE pattern is a blob".to_string())),
        Value::Null => unreachable!(),
    };
    Ok(Value::from_bool(datum::like_match(&pattern, subject)))
}

/// True only when the predicate evaluates to true (Null and false reject).
pub fn accepts(pred: &BoundExpr, rows: &[&[Value]]) -> Result<bool> {
    Ok(eval(pred, rows, &[])?.truth() == Some(true))
}
