//! Access-path selection.
//!
//! WHERE is split on top-level `AND`. For the table at FROM position `j`, a
//! conjunct `col = expr` (either side) is an equality candidate when `col`
//! belongs to `j` and `expr` only reads tables before `j`. The index with
//! the longest fully-covered leading prefix wins, ties going to the index
//! created first. Failing that, comparison conjuncts on an index's first
//! column give a range scan. Every conjunct is still evaluated as a filter,
//! at the first nesting level where all its tables are bound.

use std::cmp::Ordering;
use std::ops::Bound;

use crate::datum::{compare_values, BinOp, Value};
use crate::error::Result;
use crate::storage::{RowId, Table};

use super::bind::{eval, BoundExpr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessPath {
    FullScan,
    /// Equality on the first `prefix` columns of `index`.
    IndexSeek { index: String, prefix: usize },
    /// Bounds on the first column of `index`.
    IndexRange { index: String },
}

#[derive(Debug, Clone)]
pub struct TablePlan {
    pub path: AccessPath,
    seek_keys: Vec<BoundExpr>,
    lower: Vec<(BoundExpr, bool)>,
    upper: Vec<(BoundExpr, bool)>,
    /// Conjuncts checked once this table's row is bound.
    pub filters: Vec<BoundExpr>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub tables: Vec<TablePlan>,
    /// Conjuncts of a query without tables.
    pub constant_filters: Vec<BoundExpr>,
}

impl Plan {
    pub fn paths(&self) -> Vec<AccessPath> {
        self.tables.iter().map(|t| t.path.clone()).collect()
    }
}

pub fn split_conjuncts(expr: BoundExpr, out: &mut Vec<BoundExpr>) {
    match expr {
        BoundExpr::And(l, r) => {
            split_conjuncts(*l, out);
            split_conjuncts(*r, out);
        }
        other => out.push(other),
    }
}

/// `(column, op, other side)` normalized so the column is on the left.
fn column_comparison(conj: &BoundExpr, table: usize) -> Option<(usize, BinOp, &BoundExpr)> {
    let BoundExpr::Binary(op, l, r) = conj else {
        return None;
    };
    if !op.is_comparison() || *op == BinOp::Ne {
        return None;
    }
    let usable = |e: &BoundExpr| e.max_table().is_none_or(|t| t < table);
    match (&**l, &**r) {
        (BoundExpr::Column(t, c), other) if *t == table && usable(other) => Some((*c, *op, other)),
        (other, BoundExpr::Column(t, c)) if *t == table && usable(other) => Some((*c, op.flip(), other)),
        _ => None,
    }
}

pub fn plan(tables: &[&Table], filter: Option<BoundExpr>, use_indexes: bool) -> Plan {
    let mut conjuncts = Vec::new();
    if let Some(f) = filter {
        split_conjuncts(f, &mut conjuncts);
    }
    let mut plans: Vec<TablePlan> = Vec::with_capacity(tables.len());
    for (j, table) in tables.iter().enumerate() {
        let mut tp = TablePlan {
            path: AccessPath::FullScan,
            seek_keys: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            filters: Vec::new(),
        };
        if use_indexes {
            choose_index(j, table, &conjuncts, &mut tp);
        }
        plans.push(tp);
    }
    if tables.is_empty() {
        return Plan {
            tables: plans,
            constant_filters: conjuncts,
        };
    }
    let last = tables.len() - 1;
    for conj in conjuncts {
        let level = conj.max_table().unwrap_or(0).min(last);
        plans[level].filters.push(conj);
    }
    Plan {
        tables: plans,
        constant_filters: Vec::new(),
    }
}

fn choose_index(j: usize, table: &Table, conjuncts: &[BoundExpr], tp: &mut TablePlan) {
    let comparisons: Vec<_> = conjuncts.iter().filter_map(|c| column_comparison(c, j)).collect();
    let equality_for = |col: usize| {
        comparisons
            .iter()
            .find(|(c, op, _)| *c == col && *op == BinOp::Eq)
            .map(|(_, _, e)| (*e).clone())
    };
    let mut best: Option<(usize, Vec<BoundExpr>)> = None;
    for (i, index) in table.indexes().iter().enumerate() {
        let keys: Vec<BoundExpr> = index.columns.iter().map_while(|&c| equality_for(c)).collect();
        if !keys.is_empty() && best.as_ref().is_none_or(|(_, k)| keys.len() > k.len()) {
            best = Some((i, keys));
        }
    }
    if let Some((i, keys)) = best {
        tp.path = AccessPath::IndexSeek {
            index: table.indexes()[i].name.clone(),
            prefix: keys.len(),
        };
        tp.seek_keys = keys;
        return;
    }
    for index in table.indexes() {
        let lead = index.columns[0];
        for (c, op, e) in &comparisons {
            if *c != lead {
                continue;
            }
            match op {
                BinOp::Gt => tp.lower.push(((*e).clone(), false)),
                BinOp::Ge => tp.lower.push(((*e).clone(), true)),
                BinOp::Lt => tp.upper.push(((*e).clone(), false)),
                BinOp::Le => tp.upper.push(((*e).clone(), true)),
                _ => {}
            }
        }
        if !tp.lower.is_empty() || !tp.upper.is_empty() {
            tp.path = AccessPath::IndexRange {
                index: index.name.clone(),
            };
            return;
        }
    }
}

/// Tightest bound among candidates; `None` when some bound is Null (the
/// comparison can never be true).
fn tightest(
    bounds: &[(BoundExpr, bool)],
    outer: &[&[Value]],
    want: Ordering,
) -> Result<Option<Bound<Value>>> {
    let mut best: Bound<Value> = Bound::Unbounded;
    for (expr, inclusive) in bounds {
        let v = eval(expr, outer, &[])?;
        if v.is_null() {
            return Ok(None);
        }
        let replace = match &best {
            Bound::Unbounded => true,
            Bound::Included(b) | Bound::Excluded(b) => match compare_values(&v, b) {
                Ordering::Equal => !inclusive,
                o => o == want,
            },
        };
        if replace {
            best = if *inclusive { Bound::Included(v) } else { Bound::Excluded(v) };
        }
    }
    Ok(Some(best))
}

impl TablePlan {
    /// Candidate rowids for this table given the bound outer rows, in
    /// ascending rowid order so results never depend on the access path.
    pub fn candidates(&self, table: &Table, outer: &[&[Value]]) -> Result<Vec<RowId>> {
        let mut ids: Vec<RowId> = match &self.path {
            AccessPath::FullScan => return Ok(table.scan().map(|(id, _)| id).collect()),
            AccessPath::IndexSeek { index, .. } => {
                let mut key = Vec::with_capacity(self.seek_keys.len());
                for e in &self.seek_keys {
                    let v = eval(e, outer, &[])?;
                    if v.is_null() {
                        return Ok(Vec::new());
                    }
                    key.push(v);
                }
                table.index(index).expect("planned index exists").seek(&key).collect()
            }
            AccessPath::IndexRange { index } => {
                let Some(lo) = tightest(&self.lower, outer, Ordering::Greater)? else {
                    return Ok(Vec::new());
                };
                let Some(hi) = tightest(&self.upper, outer, Ordering::Less)? else {
                    return Ok(Vec::new());
                };
                if let (Bound::Included(a) | Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) =
                    (&lo, &hi)
                {
                    match compare_values(a, b) {
                        Ordering::Greater => return Ok(Vec::new()),
                        Ordering::Equal if !matches!((&lo, &hi), (Bound::Included(_), Bound::Included(_))) => {
                            return Ok(Vec::new())
                        }
                        _ => {}
                    }
                }
                table.index(index).expect("planned index exists").range(lo, hi).collect()
            }
        };
        ids.sort_unstable();
        Ok(ids)
    }
}
