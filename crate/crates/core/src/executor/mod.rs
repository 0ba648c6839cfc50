//! Statement execution against the catalog.
//!
//! SELECT runs as nested loops in FROM order. Each table's candidate rows
//! come from its planned access path and are visited in rowid order, so the
//! row order of a result never depends on which indexes exist. Grouped
//! output is ordered by group key; ORDER BY is a stable sort on top.

pub mod aggregate;
pub mod bind;
pub mod plan;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::datum::{compare_values, Value};
use crate::error::{Error, Result};
use crate::sql::ast::{self, Expr, Projection};
use crate::storage::{Catalog, Column, RowId, Table};

use aggregate::{Accumulator, AggSpec};
use bind::{accepts, eval, BoundExpr, Scope};
pub use plan::{AccessPath, Plan};

pub const MAX_JOIN_TABLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    /// When false every table is read by full scan.
    pub use_indexes: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { use_indexes: true }
    }
}

fn resolve_from<'a>(catalog: &'a Catalog, from: &[ast::TableRef]) -> Result<Vec<&'a Table>> {
    if from.len() > MAX_JOIN_TABLES {
        return Err(Error::parse(
            0,
            format!("at most {MAX_JOIN_TABLES} tables may be joined"),
        ));
    }
    from.iter().map(|t| catalog.table(&t.name)).collect()
}

/// Plans a SELECT without running it.
pub fn plan_select(catalog: &Catalog, sel: &ast::Select, opts: ExecOptions) -> Result<Plan> {
    let tables = resolve_from(catalog, &sel.from)?;
    let mut scope = Scope::new();
    for (t, r) in tables.iter().zip(&sel.from) {
        scope.push(r.visible_name(), t);
    }
    let filter = sel.filter.as_ref().map(|f| scope.bind(f, None)).transpose()?;
    Ok(plan::plan(&tables, filter, opts.use_indexes))
}

/// Drives the nested loop, calling `emit` for every combination that
/// passes all filters. `emit` returns false to stop early.
fn nested_loop(
    tables: &[&Table],
    plan: &Plan,
    emit: &mut dyn FnMut(&[&[Value]]) -> Result<bool>,
) -> Result<()> {
    let mut current: Vec<&[Value]> = Vec::with_capacity(tables.len());
    if tables.is_empty() {
        for f in &plan.constant_filters {
            if !accepts(f, &current)? {
                return Ok(());
            }
        }
        emit(&current)?;
        return Ok(());
    }
    level(tables, plan, 0, &mut current, emit)?;
    Ok(())
}

fn level<'t>(
    tables: &[&'t Table],
    plan: &Plan,
    j: usize,
    current: &mut Vec<&'t [Value]>,
    emit: &mut dyn FnMut(&[&[Value]]) -> Result<bool>,
) -> Result<bool> {
    let tp = &plan.tables[j];
    let table = tables[j];
    for rowid in tp.candidates(table, current)? {
        let row = table.row(rowid).expect("candidate rowid exists");
        current.push(&row.values);
        let mut pass = true;
        for f in &tp.filters {
            if !accepts(f, current)? {
                pass = false;
                break;
            }
        }
        let keep_going = if !pass {
            true
        } else if j + 1 == tables.len() {
            emit(current)?
        } else {
            level(tables, plan, j + 1, current, emit)?
        };
        current.pop();
        if !keep_going {
            return Ok(false);
        }
    }
    Ok(true)
}

enum OrderKey {
    Output(usize),
    Expr(BoundExpr),
}

fn projection_name(expr: &Expr, alias: &Option<String>) -> String {
    match (alias, expr) {
        (Some(a), _) => a.clone(),
        (None, Expr::Column(c)) => c.column.clone(),
        (None, e) => e.to_string(),
    }
}

pub fn execute_select(catalog: &Catalog, sel: &ast::Select, opts: ExecOptions) -> Result<ResultSet> {
    let tables = resolve_from(catalog, &sel.from)?;
    let mut scope = Scope::new();
    for (t, r) in tables.iter().zip(&sel.from) {
        scope.push(r.visible_name(), t);
    }

    let mut specs: Vec<AggSpec> = Vec::new();
    let mut columns = Vec::new();
    let mut outputs: Vec<BoundExpr> = Vec::new();
    let mut has_star = false;
    for p in &sel.projections {
        match p {
            Projection::Star => {
                if scope.is_empty() {
                    return Err(Error::parse(0, "* requires a FROM clause"));
                }
                has_star = true;
                for t in 0..scope.len() {
                    for (c, col) in scope.columns(t).iter().enumerate() {
                        columns.push(col.name.clone());
                        outputs.push(BoundExpr::Column(t, c));
                    }
                }
            }
            Projection::Expr { expr, alias } => {
                columns.push(projection_name(expr, alias));
                outputs.push(scope.bind(expr, Some(&mut specs))?);
            }
        }
    }
    let mut order_keys = Vec::new();
    for term in &sel.order_by {
        let alias_hit = match &term.expr {
            Expr::Column(c) if c.table.is_none() => sel.projections.iter().position(|p| {
                matches!(p, Projection::Expr { alias: Some(a), .. } if a.eq_ignore_ascii_case(&c.column))
            }),
            _ => None,
        };
        let key = match alias_hit {
            // Star expands before aliased columns only when it appears first;
            // map the projection index onto the output index.
            Some(p) => OrderKey::Output(output_position(sel, &scope, p)),
            None => OrderKey::Expr(scope.bind(&term.expr, Some(&mut specs))?),
        };
        order_keys.push((key, term.desc));
    }
    let group_cols = sel
        .group_by
        .iter()
        .map(|c| scope.resolve(c))
        .collect::<Result<Vec<_>>>()?;
    let aggregate_query = !specs.is_empty() || !group_cols.is_empty();

    if aggregate_query {
        let check = |e: &BoundExpr| -> Result<()> {
            let mut cols = Vec::new();
            e.free_columns(&mut cols);
            match cols.iter().find(|c| !group_cols.contains(c)) {
                Some(&(t, c)) => Err(Error::AggregateMisuse(format!(
                    "column {} must appear in GROUP BY or inside an aggregate",
                    scope.columns(t)[c].name
                ))),
                None => Ok(()),
            }
        };
        if has_star {
            return Err(Error::AggregateMisuse("* in an aggregate query".to_string()));
        }
        for e in &outputs {
            check(e)?;
        }
        for (k, _) in &order_keys {
            if let OrderKey::Expr(e) = k {
                check(e)?;
            }
        }
    }

    let filter = sel.filter.as_ref().map(|f| scope.bind(f, None)).transpose()?;
    let plan = plan::plan(&tables, filter, opts.use_indexes);

    // (output row, sort keys)
    let mut produced: Vec<(Vec<Value>, Vec<Value>)> = Vec::new();
    let sort_keys = |row: &[&[Value]], aggs: &[Value], out: &[Value]| -> Result<Vec<Value>> {
        order_keys
            .iter()
            .map(|(k, _)| match k {
                OrderKey::Output(i) => Ok(out[*i].clone()),
                OrderKey::Expr(e) => eval(e, row, aggs),
            })
            .collect()
    };

    if aggregate_query {
        struct Group {
            representative: Vec<Vec<Value>>,
            accs: Vec<Accumulator>,
        }
        let mut groups: BTreeMap<Vec<Value>, Group> = BTreeMap::new();
        nested_loop(&tables, &plan, &mut |rows| {
            let key: Vec<Value> = group_cols.iter().map(|&(t, c)| rows[t][c].clone()).collect();
            let group = groups.entry(key).or_insert_with(|| Group {
                representative: rows.iter().map(|r| r.to_vec()).collect(),
                accs: specs.iter().map(|s| Accumulator::new(s.func)).collect(),
            });
            for (spec, acc) in specs.iter().zip(&mut group.accs) {
                match &spec.arg {
                    None => acc.update(None)?,
                    Some(arg) => acc.update(Some(&eval(arg, rows, &[])?))?,
                }
            }
            Ok(true)
        })?;
        if groups.is_empty() && group_cols.is_empty() {
            groups.insert(
                Vec::new(),
                Group {
                    representative: tables.iter().map(|t| vec![Value::Null; t.columns.len()]).collect(),
                    accs: specs.iter().map(|s| Accumulator::new(s.func)).collect(),
                },
            );
        }
        for group in groups.values() {
            let aggs: Vec<Value> = group.accs.iter().map(Accumulator::finish).collect();
            let rows: Vec<&[Value]> = group.representative.iter().map(Vec::as_slice).collect();
            let out = outputs.iter().map(|e| eval(e, &rows, &aggs)).collect::<Result<Vec<_>>>()?;
            let keys = sort_keys(&rows, &aggs, &out)?;
            produced.push((out, keys));
        }
    } else {
        let early_limit = if order_keys.is_empty() { sel.limit } else { None };
        if early_limit != Some(0) {
            nested_loop(&tables, &plan, &mut |rows| {
                let out = outputs.iter().map(|e| eval(e, rows, &[])).collect::<Result<Vec<_>>>()?;
                let keys = sort_keys(rows, &[], &out)?;
                produced.push((out, keys));
                Ok(early_limit.is_none_or(|n| (produced.len() as u64) < n))
            })?;
        }
    }

    if !order_keys.is_empty() {
        produced.sort_by(|(_, a), (_, b)| {
            for ((x, y), (_, desc)) in a.iter().zip(b).zip(&order_keys) {
                let o = compare_values(x, y);
                if o != Ordering::Equal {
                    return if *desc { o.reverse() } else { o };
                }
            }
            Ordering::Equal
        });
    }
    let mut rows: Vec<Vec<Value>> = produced.into_iter().map(|(r, _)| r).collect();
    if let Some(n) = sel.limit {
        rows.truncate(n.min(usize::MAX as u64) as usize);
    }
    Ok(ResultSet { columns, rows })
}

/// Output column index of the `p`-th projection (stars expand to several).
fn output_position(sel: &ast::Select, scope: &Scope<'_>, p: usize) -> usize {
    let star_width: usize = (0..scope.len()).map(|t| scope.columns(t).len()).sum();
    sel.projections[..p]
        .iter()
        .map(|proj| match proj {
            Projection::Star => star_width,
            Projection::Expr { .. } => 1,
        })
        .sum()
}

/// Rowids of `table` matching `filter`, in rowid order.
fn matching_rowids(
    table: &Table,
    name: &str,
    filter: Option<&Expr>,
    opts: ExecOptions,
) -> Result<Vec<RowId>> {
    let mut scope = Scope::new();
    scope.push(name, table);
    let filter = filter.map(|f| scope.bind(f, None)).transpose()?;
    let plan = plan::plan(&[table], filter, opts.use_indexes);
    let tp = &plan.tables[0];
    let mut out = Vec::new();
    for rowid in tp.candidates(table, &[])? {
        let row = table.row(rowid).expect("candidate rowid exists");
        let rows = [row.values.as_slice()];
        let mut pass = true;
        for f in &tp.filters {
            if !accepts(f, &rows)? {
                pass = false;
                break;
            }
        }
        if pass {
            out.push(rowid);
        }
    }
    Ok(out)
}

/// Evaluates the VALUES rows into full-width rows without touching the table.
pub fn prepare_insert(table: &Table, ins: &ast::Insert) -> Result<Vec<Vec<Value>>> {
    let positions: Vec<usize> = match &ins.columns {
        None => (0..table.columns.len()).collect(),
        Some(names) => {
            let mut positions = Vec::with_capacity(names.len());
            for name in names {
                let pos = table
                    .column_index(name)
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
                if positions.contains(&pos) {
                    return Err(Error::DuplicateColumn(name.clone()));
                }
                positions.push(pos);
            }
            positions
        }
    };
    let scope = Scope::new();
    let mut rows = Vec::with_capacity(ins.rows.len());
    for exprs in &ins.rows {
        if exprs.len() != positions.len() {
            return Err(Error::ArityMismatch {
                values: exprs.len(),
                columns: positions.len(),
            });
        }
        let mut row = vec![Value::Null; table.columns.len()];
        for (expr, &pos) in exprs.iter().zip(&positions) {
            let bound = scope.bind(expr, None)?;
            row[pos] = eval(&bound, &[], &[])?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Inserts every VALUES row (all rows are evaluated before any is stored).
pub fn execute_insert(table: &mut Table, ins: &ast::Insert, now_ms: i64) -> Result<u64> {
    let rows = prepare_insert(table, ins)?;
    let n = rows.len() as u64;
    for row in rows {
        table.insert_row(row, now_ms)?;
    }
    Ok(n)
}

pub fn execute_update(table: &mut Table, up: &ast::Update, opts: ExecOptions) -> Result<u64> {
    let name = table.name.clone();
    let ids = matching_rowids(table, &name, up.filter.as_ref(), opts)?;
    let mut scope = Scope::new();
    scope.push(&name, table);
    let mut assignments = Vec::with_capacity(up.assignments.len());
    for (col, expr) in &up.assignments {
        let pos = table
            .column_index(col)
            .ok_or_else(|| Error::UnknownColumn(col.clone()))?;
        assignments.push((pos, scope.bind(expr, None)?));
    }
    // Evaluate everything against pre-update values first so a failing
    // expression leaves the table untouched.
    let mut updates = Vec::with_capacity(ids.len());
    for &id in &ids {
        let old = &table.row(id).expect("matched row").values;
        let mut new = old.clone();
        for (pos, expr) in &assignments {
            new[*pos] = eval(expr, &[old.as_slice()], &[])?;
        }
        updates.push((id, new));
    }
    for (id, values) in updates {
        table.update_row(id, values)?;
    }
    Ok(ids.len() as u64)
}

pub fn execute_delete(table: &mut Table, del: &ast::Delete, opts: ExecOptions) -> Result<u64> {
    let name = table.name.clone();
    let ids = matching_rowids(table, &name, del.filter.as_ref(), opts)?;
    Ok(table.delete_rows(&ids) as u64)
}

/// CREATE TABLE / DROP TABLE / CREATE INDEX.
pub fn execute_ddl(catalog: &mut Catalog, stmt: &ast::Statement) -> Result<()> {
    match stmt {
        ast::Statement::CreateTable(ct) => {
            let columns = ct
                .columns
                .iter()
                .map(|c| Column::new(c.name.clone(), c.affinity))
                .collect();
            catalog.create_table(&ct.name, columns)?;
        }
        ast::Statement::DropTable { name } => {
            catalog.drop_table(name)?;
        }
        ast::Statement::CreateIndex(ci) => catalog.create_index(&ci.name, &ci.table, &ci.columns)?,
        other => {
            return Err(Error::Internal(format!("{} is not DDL", other.verb())));
        }
    }
    Ok(())
}
