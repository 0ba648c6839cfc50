//! Shared test support: a brute-force reference evaluator over the AST and a
//! random generator of databases and statements.
//!
//! The reference evaluator shares only the value-level primitives
//! (comparison, operators, LIKE, coercion) with the engine. It has its own
//! name resolution, evaluates the full cross product of FROM tables, groups
//! by linear search and computes aggregates from the group's rows.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqcached_core::datum::{self, compare_values, identical, BinOp, Value};
use sqcached_core::executor::AccessPath;
use sqcached_core::sql::ast::{
    ColumnRef, Delete, Expr, FnArgs, Insert, OrderTerm, Projection, Select, Statement, TableRef, Update,
};
use sqcached_core::storage::Affinity;
use sqcached_core::{Clock, Engine, Outcome};

// ---------------------------------------------------------------------------
// Reference model

#[derive(Debug, Clone)]
pub struct RefTable {
    pub name: String,
    pub columns: Vec<(String, Affinity)>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Default)]
pub struct RefDb {
    pub tables: Vec<RefTable>,
}

type RefResult<T> = Result<T, String>;

struct Env<'a> {
    /// (visible name, table, current row)
    bound: Vec<(&'a str, &'a RefTable, &'a [Value])>,
}

struct Group<'a> {
    rows: Vec<Env<'a>>,
    representative: Env<'a>,
}

impl RefDb {
    pub fn table(&self, name: &str) -> RefResult<&RefTable> {
        self.tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| format!("no table {name}"))
    }

    fn table_mut(&mut self, name: &str) -> RefResult<&mut RefTable> {
        self.tables
            .iter_mut()
            .find(|t| t.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| format!("no table {name}"))
    }

    pub fn select(&self, sel: &Select) -> RefResult<Vec<Vec<Value>>> {
        let tables: Vec<(&str, &RefTable)> = sel
            .from
            .iter()
            .map(|r| Ok((r.visible_name(), self.table(&r.name)?)))
            .collect::<RefResult<_>>()?;

        // Full cross product, leftmost table outermost.
        let mut combos: Vec<Vec<&[Value]>> = vec![Vec::new()];
        for (_, t) in &tables {
            let mut next = Vec::with_capacity(combos.len() * t.rows.len());
            for c in &combos {
                for row in &t.rows {
                    let mut c2 = c.clone();
                    c2.push(row.as_slice());
                    next.push(c2);
                }
            }
            combos = next;
        }
        let mut matching: Vec<Env> = Vec::new();
        for combo in &combos {
            let env = Env {
                bound: tables.iter().zip(combo).map(|((v, t), r)| (*v, *t, *r)).collect(),
            };
            let keep = match &sel.filter {
                None => true,
                Some(f) => eval(f, &env, None)?.truth() == Some(true),
            };
            if keep {
                matching.push(env);
            }
        }

        let aggregate = !sel.group_by.is_empty()
            || sel.projections.iter().any(|p| matches!(p, Projection::Expr { expr, .. } if has_aggregate(expr)))
            || sel.order_by.iter().any(|o| has_aggregate(&o.expr));

        let alias_of = |term: &OrderTerm| -> Option<usize> {
            let Expr::Column(c) = &term.expr else { return None };
            if c.table.is_some() {
                return None;
            }
            sel.projections
                .iter()
                .position(|p| matches!(p, Projection::Expr { alias: Some(a), .. } if a.eq_ignore_ascii_case(&c.column)))
        };

        let mut produced: Vec<(Vec<Value>, Vec<Value>)> = Vec::new();
        let project = |env: &Env, group: Option<&Group>| -> RefResult<(Vec<Value>, Vec<Value>)> {
            let mut out = Vec::new();
            let mut proj_pos = Vec::new();
            for p in &sel.projections {
                proj_pos.push(out.len());
                match p {
                    Projection::Star => {
                        for (_, _, row) in &env.bound {
                            out.extend(row.iter().cloned());
                        }
                    }
                    Projection::Expr { expr, .. } => out.push(eval(expr, env, group)?),
                }
            }
            let mut keys = Vec::new();
            for term in &sel.order_by {
                keys.push(match alias_of(term) {
                    Some(p) => out[proj_pos[p]].clone(),
                    None => eval(&term.expr, env, group)?,
                });
            }
            Ok((out, keys))
        };

        if aggregate {
            let mut groups: Vec<(Vec<Value>, Vec<Env>)> = Vec::new();
            for env in matching {
                let key = sel
                    .group_by
                    .iter()
                    .map(|c| resolve(c, &env))
                    .collect::<RefResult<Vec<_>>>()?;
                match groups.iter_mut().find(|(k, _)| keys_equal(k, &key)) {
                    Some((_, members)) => members.push(env),
                    None => groups.push((key, vec![env])),
                }
            }
            groups.sort_by(|(a, _), (b, _)| cmp_keys(a, b));
            if groups.is_empty() && sel.group_by.is_empty() {
                groups.push((Vec::new(), Vec::new()));
            }
            let null_rows: Vec<Vec<Value>> = tables.iter().map(|(_, t)| vec![Value::Null; t.columns.len()]).collect();
            for (_, members) in groups {
                let representative = match members.first() {
                    Some(first) => Env {
                        bound: first.bound.clone(),
                    },
                    None => Env {
                        bound: tables
                            .iter()
                            .zip(&null_rows)
                            .map(|((v, t), r)| (*v, *t, r.as_slice()))
                            .collect(),
                    },
                };
                let group = Group {
                    rows: members,
                    representative,
                };
                produced.push(project(&group.representative, Some(&group))?);
            }
        } else {
            for env in &matching {
                produced.push(project(env, None)?);
            }
        }

        if !sel.order_by.is_empty() {
            produced.sort_by(|(_, a), (_, b)| {
                for ((x, y), term) in a.iter().zip(b).zip(&sel.order_by) {
                    let o = compare_values(x, y);
                    if o != Ordering::Equal {
                        return if term.desc { o.reverse() } else { o };
                    }
                }
                Ordering::Equal
            });
        }
        let mut rows: Vec<Vec<Value>> = produced.into_iter().map(|(r, _)| r).collect();
        if let Some(n) = sel.limit {
            rows.truncate(n as usize);
        }
        Ok(rows)
    }

    pub fn insert(&mut self, ins: &Insert) -> RefResult<u64> {
        let table = self.table_mut(&ins.table)?;
        let positions: Vec<usize> = match &ins.columns {
            None => (0..table.columns.len()).collect(),
            Some(names) => names
                .iter()
                .map(|n| {
                    table
                        .columns
                        .iter()
                        .position(|(c, _)| c.eq_ignore_ascii_case(n))
                        .ok_or_else(|| format!("no column {n}"))
                })
                .collect::<RefResult<_>>()?,
        };
        let empty = Env { bound: Vec::new() };
        let mut new_rows = Vec::new();
        for exprs in &ins.rows {
            if exprs.len() != positions.len() {
                return Err("arity".into());
            }
            let mut row = vec![Value::Null; table.columns.len()];
            for (e, &p) in exprs.iter().zip(&positions) {
                row[p] = table.columns[p].1.coerce(eval(e, &empty, None)?);
            }
            new_rows.push(row);
        }
        let n = new_rows.len() as u64;
        table.rows.extend(new_rows);
        Ok(n)
    }

    fn matches(&self, table: &RefTable, filter: Option<&Expr>) -> RefResult<Vec<bool>> {
        table
            .rows
            .iter()
            .map(|row| match filter {
                None => Ok(true),
                Some(f) => {
                    let env = Env {
                        bound: vec![(table.name.as_str(), table, row.as_slice())],
                    };
                    Ok(eval(f, &env, None)?.truth() == Some(true))
                }
            })
            .collect()
    }

    pub fn update(&mut self, up: &Update) -> RefResult<u64> {
        let table = self.table(&up.table)?;
        let hits = self.matches(table, up.filter.as_ref())?;
        let mut new_rows = table.rows.clone();
        let mut n = 0;
        for (i, row) in table.rows.iter().enumerate() {
            if !hits[i] {
                continue;
            }
            n += 1;
            let env = Env {
                bound: vec![(table.name.as_str(), table, row.as_slice())],
            };
            for (col, e) in &up.assignments {
                let p = table
                    .columns
                    .iter()
                    .position(|(c, _)| c.eq_ignore_ascii_case(col))
                    .ok_or_else(|| format!("no column {col}"))?;
                new_rows[i][p] = table.columns[p].1.coerce(eval(e, &env, None)?);
            }
        }
        self.table_mut(&up.table)?.rows = new_rows;
        Ok(n)
    }

    pub fn delete(&mut self, del: &Delete) -> RefResult<u64> {
        let table = self.table(&del.table)?;
        let hits = self.matches(table, del.filter.as_ref())?;
        let kept: Vec<Vec<Value>> = table
            .rows
            .iter()
            .zip(&hits)
            .filter(|(_, h)| !**h)
            .map(|(r, _)| r.clone())
            .collect();
        let removed = (table.rows.len() - kept.len()) as u64;
        self.table_mut(&del.table)?.rows = kept;
        Ok(removed)
    }
}

fn keys_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| compare_values(x, y) == Ordering::Equal)
}

fn cmp_keys(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = compare_values(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn has_aggregate(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |x| {
        if let Expr::Call { name, .. } = x {
            found |= ["COUNT", "SUM", "AVG", "MIN", "MAX"].iter().any(|a| a.eq_ignore_ascii_case(name));
        }
    });
    found
}

fn resolve(c: &ColumnRef, env: &Env) -> RefResult<Value> {
    let mut hits = Vec::new();
    for (visible, table, row) in &env.bound {
        if let Some(q) = &c.table {
            if !q.eq_ignore_ascii_case(visible) {
                continue;
            }
        }
        for (i, (name, _)) in table.columns.iter().enumerate() {
            if name.eq_ignore_ascii_case(&c.column) {
                hits.push(row[i].clone());
            }
        }
    }
    match hits.len() {
        1 => Ok(hits.pop().unwrap()),
        0 => Err(format!("unknown column {c}")),
        _ => Err(format!("ambiguous column {c}")),
    }
}

fn truth3(v: &Value) -> Option<bool> {
    match v {
        Value::Null => None,
        Value::Integer(i) => Some(*i != 0),
        Value::Real(r) => Some(*r != 0.0),
        _ => Some(false),
    }
}

fn bool_value(b: Option<bool>) -> Value {
    match b {
        None => Value::Null,
        Some(b) => Value::Integer(b as i64),
    }
}

fn eval(e: &Expr, env: &Env, group: Option<&Group>) -> RefResult<Value> {
    let err = |e: sqcached_core::Error| e.to_string();
    Ok(match e {
        Expr::Literal(v) => v.clone(),
        Expr::Column(c) => resolve(c, env)?,
        Expr::Neg(x) => datum::negate(&eval(x, env, group)?).map_err(err)?,
        Expr::Not(x) => bool_value(truth3(&eval(x, env, group)?).map(|b| !b)),
        Expr::Binary { op, left, right } => {
            datum::eval_binop(*op, &eval(left, env, group)?, &eval(right, env, group)?).map_err(err)?
        }
        Expr::And(l, r) => {
            let (a, b) = (truth3(&eval(l, env, group)?), truth3(&eval(r, env, group)?));
            bool_value(match (a, b) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            })
        }
        Expr::Or(l, r) => {
            let (a, b) = (truth3(&eval(l, env, group)?), truth3(&eval(r, env, group)?));
            bool_value(match (a, b) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            })
        }
        Expr::Like { expr, pattern } => {
            let s = eval(expr, env, group)?;
            let p = eval(pattern, env, group)?;
            match (&s, &p) {
                (Value::Null, _) | (_, Value::Null) => Value::Null,
                (_, Value::Text(p)) => bool_value(Some(naive_like(p, &s))),
                (_, Value::Integer(_) | Value::Real(_)) => bool_value(Some(naive_like(p.to_string().as_bytes(), &s))),
                _ => return Err("blob pattern".into()),
            }
        }
        Expr::IsNull { expr, negated } => bool_value(Some(eval(expr, env, group)?.is_null() != *negated)),
        Expr::Call { name, args } => {
            let upper = name.to_ascii_uppercase();
            if ["COUNT", "SUM", "AVG", "MIN", "MAX"].contains(&upper.as_str()) {
                let group = group.ok_or("aggregate outside group")?;
                return aggregate(&upper, args, group);
            }
            let FnArgs::List(list) = args else { return Err("star".into()) };
            let vals = list.iter().map(|a| eval(a, env, group)).collect::<RefResult<Vec<_>>>()?;
            datum::eval_scalar(&upper, &vals).map_err(err)?
        }
    })
}

/// Backtracking LIKE, written independently of the engine's matcher.
fn naive_like(pattern: &[u8], subject: &Value) -> bool {
    fn go(p: &[u8], s: &[u8]) -> bool {
        match p.split_first() {
            None => s.is_empty(),
            Some((b'%', rest)) => (0..=s.len()).any(|i| go(rest, &s[i..])),
            Some((b'_', rest)) => !s.is_empty() && go(rest, &s[1..]),
            Some((c, rest)) => s.first().is_some_and(|x| x.eq_ignore_ascii_case(c)) && go(rest, &s[1..]),
        }
    }
    match subject {
        Value::Text(s) => go(pattern, s),
        _ => false,
    }
}

fn aggregate(name: &str, args: &FnArgs, group: &Group) -> RefResult<Value> {
    let inputs: Vec<Value> = match args {
        FnArgs::Star => return Ok(Value::Integer(group.rows.len() as i64)),
        FnArgs::List(list) => group
            .rows
            .iter()
            .map(|env| eval(&list[0], env, None))
            .collect::<RefResult<Vec<_>>>()?
            .into_iter()
            .filter(|v| !v.is_null())
            .collect(),
    };
    Ok(match name {
        "COUNT" => Value::Integer(inputs.len() as i64),
        "SUM" | "AVG" if inputs.is_empty() => Value::Null,
        "SUM" => {
            if inputs.iter().all(|v| matches!(v, Value::Integer(_))) {
                let total: i128 = inputs.iter().map(|v| if let Value::Integer(i) = v { *i as i128 } else { 0 }).sum();
                match i64::try_from(total) {
                    Ok(t) => Value::Integer(t),
                    Err(_) => return Err("sum overflow not generated".into()),
                }
            } else {
                Value::Real(float_sum(&inputs)?)
            }
        }
        "AVG" => Value::Real(float_sum(&inputs)? / inputs.len() as f64),
        "MIN" | "MAX" => {
            let want = if name == "MIN" { Ordering::Less } else { Ordering::Greater };
            let mut best = inputs[0..0].first().cloned();
            for v in inputs {
                if best.as_ref().is_none_or(|b| compare_values(&v, b) == want) {
                    best = Some(v);
                }
            }
            best.unwrap_or(Value::Null)
        }
        _ => unreachable!(),
    })
}

fn float_sum(inputs: &[Value]) -> RefResult<f64> {
    let mut s = -0.0;
    for v in inputs {
        s += match v {
            Value::Integer(i) => *i as f64,
            Value::Real(r) => *r,
            other => return Err(format!("sum of {}", other.type_name())),
        };
    }
    Ok(s)
}

pub fn rows_identical(a: &[Vec<Value>], b: &[Vec<Value>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| identical(p, q)))
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Num,
    Text,
    Any,
}

const COLUMNS: [(&str, Affinity, Kind); 5] = [
    ("id", Affinity::Integer, Kind::Num),
    ("n", Affinity::Integer, Kind::Num),
    ("r", Affinity::Real, Kind::Num),
    ("s", Affinity::Text, Kind::Text),
    ("x", Affinity::None, Kind::Any),
];

const TEXT_POOL: [&str; 14] = [
    "", "a", "ab", "abc", "B", "ba", "a%c", "page:1", "page:12", "user_x", "A_b", "it's", "\\", "zz",
];
const PATTERNS: [&str; 10] = ["a%", "%b%", "_", "__", "A_C", "page:%", "%", "a\\%", "%c", "b_"];

struct Col {
    qualifier: Option<String>,
    name: &'static str,
    kind: Kind,
}

impl Col {
    fn expr(&self) -> Expr {
        Expr::Column(ColumnRef {
            table: self.qualifier.clone(),
            column: self.name.to_string(),
        })
    }
}

pub struct Generator {
    rng: ChaCha8Rng,
    pub table_names: Vec<String>,
    next_id: i64,
}

fn lit(v: Value) -> Expr {
    Expr::Literal(v)
}

fn call(name: &str, args: Vec<Expr>) -> Expr {
    Expr::Call {
        name: name.to_string(),
        args: FnArgs::List(args),
    }
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            table_names: Vec::new(),
            next_id: 1,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Schema statements for a fresh database of `tables` tables.
    pub fn schema(&mut self, tables: usize) -> Vec<String> {
        let mut out = Vec::new();
        self.table_names = (0..tables).map(|i| format!("t{i}")).collect();
        for t in self.table_names.clone() {
            out.push(format!("CREATE TABLE {t} (id INTEGER, n INTEGER, r REAL, s TEXT, x)"));
            let candidates: [&[&str]; 7] = [&["n"], &["s"], &["id"], &["n", "s"], &["s", "n"], &["x"], &["r"]];
            for (i, cols) in candidates.iter().enumerate() {
                if self.rng.gen_bool(0.4) {
                    out.push(format!("CREATE INDEX {t}_i{i} ON {t} ({})", cols.join(", ")));
                }
            }
        }
        out
    }

    fn num_literal(&mut self) -> Value {
        match self.rng.gen_range(0..10) {
            0 => Value::Null,
            1..=6 => Value::Integer(self.rng.gen_range(-3..=3)),
            _ => Value::Real(self.rng.gen_range(-6..=6) as f64 * 0.5),
        }
    }

    fn text_literal(&mut self) -> Value {
        Value::from(*TEXT_POOL.choose(&mut self.rng).unwrap())
    }

    fn any_literal(&mut self) -> Value {
        match self.rng.gen_range(0..6) {
            0 => Value::Null,
            1 => Value::Integer(self.rng.gen_range(-3..=3)),
            2 => Value::Real(self.rng.gen_range(-3..=3) as f64 + 0.25),
            3 | 4 => self.text_literal(),
            _ => Value::Blob((0..self.rng.gen_range(0..3)).map(|_| self.rng.gen_range(0..4u8) * 60).collect()),
        }
    }

    /// Value for a stored cell of the given column.
    fn cell(&mut self, col: usize) -> Value {
        match col {
            0 => Value::Integer(self.rng.gen_range(1..=30)),
            1 => match self.rng.gen_range(0..12) {
                0 => Value::Null,
                1 => Value::from(self.rng.gen_range(0..5).to_string().as_str()),
                _ => Value::Integer(self.rng.gen_range(-3..=3)),
            },
            2 => match self.rng.gen_range(0..10) {
                0 => Value::Null,
                1 => Value::Integer(self.rng.gen_range(-2..=2)),
                2 => Value::from("1.5"),
                _ => Value::Real(self.rng.gen_range(-4..=4) as f64 * 0.5),
            },
            3 => match self.rng.gen_range(0..10) {
                0 => Value::Null,
                _ => self.text_literal(),
            },
            _ => self.any_literal(),
        }
    }

    /// A literal expression for a value. Negative numbers are written as a
    /// negated literal so the rendered SQL parses back to the same tree.
    fn value_expr(v: Value) -> Expr {
        match v {
            Value::Integer(i) if i < 0 => Expr::Neg(Box::new(lit(Value::Integer(-i)))),
            Value::Real(r) if r.is_sign_negative() => Expr::Neg(Box::new(lit(Value::Real(-r)))),
            other => lit(other),
        }
    }

    pub fn insert(&mut self, table: &str) -> Statement {
        let explicit = self.rng.gen_bool(0.3);
        let cols: Vec<usize> = if explicit {
            let mut c: Vec<usize> = (0..5).filter(|_| self.rng.gen_bool(0.6)).collect();
            if c.is_empty() {
                c.push(0);
            }
            c.shuffle(&mut self.rng);
            c
        } else {
            (0..5).collect()
        };
        let nrows = self.rng.gen_range(1..=3);
        let rows = (0..nrows)
            .map(|_| cols.iter().map(|&c| Self::value_expr(self.cell(c))).collect())
            .collect();
        Statement::Insert(Insert {
            table: table.to_string(),
            columns: explicit.then(|| cols.iter().map(|&c| COLUMNS[c].0.to_string()).collect()),
            rows,
        })
    }

    fn pick<'c>(&mut self, cols: &'c [Col], kind: Kind) -> Option<&'c Col> {
        let fit: Vec<&Col> = cols.iter().filter(|c| kind == Kind::Any || c.kind == kind).collect();
        fit.choose(&mut self.rng).copied()
    }

    fn num_expr(&mut self, cols: &[Col], depth: u32) -> Expr {
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        if leaf {
            return match (self.rng.gen_bool(0.65), self.pick(cols, Kind::Num)) {
                (true, Some(c)) => c.expr(),
                _ => {
                    let v = self.num_literal();
                    Self::value_expr(v)
                }
            };
        }
        match self.rng.gen_range(0..8) {
            0 => Expr::Neg(Box::new(self.num_expr(cols, depth - 1))),
            1 => call("ABS", vec![self.num_expr(cols, depth - 1)]),
            2 => call("LENGTH", vec![self.text_expr(cols, depth - 1)]),
            _ => {
                let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem]
                    .choose(&mut self.rng)
                    .unwrap();
                Expr::binary(op, self.num_expr(cols, depth - 1), self.num_expr(cols, depth - 1))
            }
        }
    }

    fn text_expr(&mut self, cols: &[Col], depth: u32) -> Expr {
        let leaf = depth == 0 || self.rng.gen_bool(0.5);
        if leaf {
            return match (self.rng.gen_bool(0.65), self.pick(cols, Kind::Text)) {
                (true, Some(c)) => c.expr(),
                _ => lit(self.text_literal()),
            };
        }
        match self.rng.gen_range(0..4) {
            0 => call("UPPER", vec![self.text_expr(cols, depth - 1)]),
            1 => call("LOWER", vec![self.text_expr(cols, depth - 1)]),
            2 => Expr::binary(BinOp::Concat, self.text_expr(cols, depth - 1), self.text_expr(cols, depth - 1)),
            _ => Expr::binary(BinOp::Concat, self.text_expr(cols, depth - 1), self.num_expr(cols, depth - 1)),
        }
    }

    fn any_expr(&mut self, cols: &[Col], depth: u32) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => self.num_expr(cols, depth),
            1 => self.text_expr(cols, depth),
            _ => match self.pick(cols, Kind::Any) {
                Some(c) if self.rng.gen_bool(0.7) => c.expr(),
                _ => {
                    let v = self.any_literal();
                    Self::value_expr(v)
                }
            },
        }
    }

    fn comparison(&mut self) -> BinOp {
        *[BinOp::Eq, BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]
            .choose(&mut self.rng)
            .unwrap()
    }

    fn bool_expr(&mut self, cols: &[Col], depth: u32) -> Expr {
        let leaf = depth == 0 || self.rng.gen_bool(0.35);
        if leaf {
            return match self.rng.gen_range(0..9) {
                // Column against a constant: the shape the planner turns into seeks and ranges.
                0..=2 => match self.pick(cols, Kind::Any) {
                    Some(c) => {
                        let col = c.expr();
                        let v = match c.kind {
                            Kind::Num => self.num_literal(),
                            Kind::Text => self.text_literal(),
                            Kind::Any => self.any_literal(),
                        };
                        let op = self.comparison();
                        if self.rng.gen_bool(0.8) {
                            Expr::binary(op, col, Self::value_expr(v))
                        } else {
                            Expr::binary(op, Self::value_expr(v), col)
                        }
                    }
                    None => lit(Value::Integer(1)),
                },
                3 => {
                    let op = self.comparison();
                    Expr::binary(op, self.num_expr(cols, 1), self.num_expr(cols, 1))
                }
                4 => {
                    let op = self.comparison();
                    Expr::binary(op, self.text_expr(cols, 1), self.text_expr(cols, 1))
                }
                5 => {
                    let op = self.comparison();
                    Expr::binary(op, self.any_expr(cols, 1), self.any_expr(cols, 1))
                }
                6 => Expr::Like {
                    expr: Box::new(if self.rng.gen_bool(0.8) {
                        self.text_expr(cols, 1)
                    } else {
                        self.any_expr(cols, 0)
                    }),
                    pattern: Box::new(lit(Value::from(*PATTERNS.choose(&mut self.rng).unwrap()))),
                },
                7 => Expr::IsNull {
                    expr: Box::new(self.any_expr(cols, 1)),
                    negated: self.rng.gen_bool(0.5),
                },
                _ => Self::value_expr(self.num_literal()),
            };
        }
        match self.rng.gen_range(0..5) {
            0 => Expr::Not(Box::new(self.bool_expr(cols, depth - 1))),
            1 => Expr::Or(
                Box::new(self.bool_expr(cols, depth - 1)),
                Box::new(self.bool_expr(cols, depth - 1)),
            ),
            _ => Expr::And(
                Box::new(self.bool_expr(cols, depth - 1)),
                Box::new(self.bool_expr(cols, depth - 1)),
            ),
        }
    }

    fn table_cols(qualifier: Option<&str>) -> Vec<Col> {
        COLUMNS
            .iter()
            .map(|(name, _, kind)| Col {
                qualifier: qualifier.map(str::to_string),
                name,
                kind: *kind,
            })
            .collect()
    }

    /// `sizes[i]` is the current row count of table `i`; joins are sized so
    /// the cross product stays small.
    pub fn select(&mut self, sizes: &[usize]) -> Statement {
        let ntables = match self.rng.gen_range(0..100) {
            0..=2 => 0,
            3..=62 => 1,
            63..=89 => 2,
            _ => 3,
        }
        .min(sizes.len());
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.shuffle(&mut self.rng);
        let mut chosen: Vec<usize> = order.into_iter().take(ntables).collect();
        while chosen.len() > 1 && chosen.iter().map(|&i| sizes[i].max(1)).product::<usize>() > 60_000 {
            chosen.pop();
        }
        let aliases = ["a", "b", "c"];
        let from: Vec<TableRef> = chosen
            .iter()
            .enumerate()
            .map(|(k, &i)| TableRef {
                name: self.table_names[i].clone(),
                alias: (chosen.len() > 1 || self.rng.gen_bool(0.2)).then(|| aliases[k].to_string()),
            })
            .collect();
        let mut cols = Vec::new();
        for r in &from {
            let q = if chosen.len() > 1 || self.rng.gen_bool(0.3) {
                Some(r.visible_name())
            } else {
                None
            };
            cols.extend(Self::table_cols(q));
        }

        let mut filter = self.rng.gen_bool(0.8).then(|| self.bool_expr(&cols, 3));
        for k in 1..from.len() {
            // Equi-join predicate from an earlier table into table k.
            let inner = from[k].visible_name().to_string();
            let outer = from[self.rng.gen_range(0..k)].visible_name().to_string();
            let (ic, oc) = *[("n", "id"), ("id", "n"), ("s", "s"), ("n", "n"), ("x", "x")]
                .choose(&mut self.rng)
                .unwrap();
            let pred = Expr::binary(
                BinOp::Eq,
                Expr::Column(ColumnRef {
                    table: Some(inner),
                    column: ic.into(),
                }),
                Expr::Column(ColumnRef {
                    table: Some(outer),
                    column: oc.into(),
                }),
            );
            if self.rng.gen_bool(0.85) {
                filter = Some(match filter {
                    Some(f) => Expr::And(Box::new(f), Box::new(pred)),
                    None => pred,
                });
            }
        }

        let aggregate = !from.is_empty() && self.rng.gen_bool(0.3);
        let mut projections = Vec::new();
        let mut group_by = Vec::new();
        let mut order_by = Vec::new();
        let mut alias_count = 0;
        let mut alias = |rng: &mut ChaCha8Rng| {
            rng.gen_bool(0.3).then(|| {
                alias_count += 1;
                format!("x{alias_count}")
            })
        };
        if aggregate {
            let ngroup = self.rng.gen_range(0..=2);
            let mut gcols = Vec::new();
            for _ in 0..ngroup {
                let c = cols.choose(&mut self.rng).unwrap();
                group_by.push(ColumnRef {
                    table: c.qualifier.clone(),
                    column: c.name.to_string(),
                });
                gcols.push(Col {
                    qualifier: c.qualifier.clone(),
                    name: c.name,
                    kind: c.kind,
                });
            }
            let nproj = self.rng.gen_range(1..=4);
            for _ in 0..nproj {
                let expr = match self.rng.gen_range(0..6) {
                    0 if !gcols.is_empty() => gcols.choose(&mut self.rng).unwrap().expr(),
                    1 => Expr::binary(BinOp::Add, self.aggregate_call(&cols), self.num_expr(&gcols, 1)),
                    _ => self.aggregate_call(&cols),
                };
                let a = alias(&mut self.rng);
                projections.push(Projection::Expr { expr, alias: a });
            }
            for _ in 0..self.rng.gen_range(0..=2) {
                let expr = match self.rng.gen_range(0..3) {
                    0 => self.aggregate_call(&cols),
                    1 => self.any_expr(&gcols, 1),
                    _ => match projections.iter().find_map(|p| match p {
                        Projection::Expr { alias: Some(a), .. } => Some(a.clone()),
                        _ => None,
                    }) {
                        Some(a) => Expr::column(&a),
                        None => self.aggregate_call(&cols),
                    },
                };
                order_by.push(OrderTerm {
                    expr,
                    desc: self.rng.gen_bool(0.5),
                });
            }
        } else {
            if !from.is_empty() && self.rng.gen_bool(0.15) {
                projections.push(Projection::Star);
            }
            let nproj = if projections.is_empty() { self.rng.gen_range(1..=4) } else { self.rng.gen_range(0..=1) };
            for _ in 0..nproj {
                let expr = match self.rng.gen_range(0..4) {
                    0 => self.num_expr(&cols, 2),
                    1 => self.text_expr(&cols, 2),
                    2 => self.bool_expr(&cols, 1),
                    _ => self.any_expr(&cols, 1),
                };
                let a = alias(&mut self.rng);
                projections.push(Projection::Expr { expr, alias: a });
            }
            for _ in 0..self.rng.gen_range(0..=3) {
                let expr = match projections.iter().find_map(|p| match p {
                    Projection::Expr { alias: Some(a), .. } => Some(a.clone()),
                    _ => None,
                }) {
                    Some(a) if self.rng.gen_bool(0.3) => Expr::column(&a),
                    _ => self.any_expr(&cols, 1),
                };
                order_by.push(OrderTerm {
                    expr,
                    desc: self.rng.gen_bool(0.5),
                });
            }
        }
        let limit = self.rng.gen_bool(0.2).then(|| self.rng.gen_range(0..10));
        Statement::Select(Select {
            projections,
            from,
            filter,
            group_by,
            order_by,
            limit,
        })
    }

    fn aggregate_call(&mut self, cols: &[Col]) -> Expr {
        match self.rng.gen_range(0..6) {
            0 => Expr::Call {
                name: "COUNT".into(),
                args: FnArgs::Star,
            },
            1 => call("COUNT", vec![self.any_expr(cols, 1)]),
            2 => call("SUM", vec![self.num_expr(cols, 1)]),
            3 => call("AVG", vec![self.num_expr(cols, 1)]),
            4 => call("MIN", vec![self.any_expr(cols, 1)]),
            _ => call("MAX", vec![self.any_expr(cols, 1)]),
        }
    }

    pub fn update(&mut self, table: &str) -> Statement {
        let cols = Self::table_cols(None);
        let mut assignments = Vec::new();
        for (name, _, kind) in COLUMNS {
            if !self.rng.gen_bool(0.35) {
                continue;
            }
            let e = match kind {
                Kind::Num => self.num_expr(&cols, 2),
                Kind::Text => self.text_expr(&cols, 2),
                Kind::Any => self.any_expr(&cols, 1),
            };
            assignments.push((name.to_string(), e));
        }
        if assignments.is_empty() {
            assignments.push(("n".to_string(), self.num_expr(&cols, 1)));
        }
        Statement::Update(Update {
            table: table.to_string(),
            assignments,
            filter: self.rng.gen_bool(0.9).then(|| self.bool_expr(&cols, 2)),
        })
    }

    pub fn delete(&mut self, table: &str) -> Statement {
        let cols = Self::table_cols(None);
        Statement::Delete(Delete {
            table: table.to_string(),
            filter: self.rng.gen_bool(0.95).then(|| self.bool_expr(&cols, 2)),
        })
    }
}

// ---------------------------------------------------------------------------
// Campaign

#[derive(Debug, Default)]
pub struct CampaignReport {
    pub databases: usize,
    pub statements: usize,
    pub selects: usize,
    pub writes: usize,
    /// SELECTs whose plan used at least one index.
    pub indexed_selects: usize,
    pub seek_paths: usize,
    pub range_paths: usize,
    pub oracle_mismatches: Vec<String>,
    pub plan_mismatches: Vec<String>,
    pub state_mismatches: Vec<String>,
    pub roundtrip_mismatches: Vec<String>,
}

fn engine_rows(engine: &mut Engine, sql: &str) -> Result<Vec<Vec<Value>>, String> {
    match engine.execute(sql.as_bytes()) {
        Ok(Outcome::Rows(rs)) => Ok(rs.rows),
        Ok(other) => Err(format!("unexpected outcome {other:?}")),
        Err(e) => Err(e.to_string()),
    }
}

fn engine_count(engine: &mut Engine, sql: &str) -> Result<u64, String> {
    match engine.execute(sql.as_bytes()) {
        Ok(Outcome::Affected(n)) => Ok(n),
        Ok(other) => Err(format!("unexpected outcome {other:?}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Runs `databases` random databases with `per_db` random statements each,
/// checking every SELECT against the reference evaluator, with and without
/// indexes, and every write against the list-of-rows model.
pub fn run_campaign(seed: u64, databases: usize, per_db: usize) -> CampaignReport {
    let mut report = CampaignReport::default();
    for d in 0..databases {
        let mut gen = Generator::new(seed.wrapping_mul(1_000_003).wrapping_add(d as u64));
        let mut engine = Engine::default();
        let mut model = RefDb::default();
        let ntables = gen.rng().gen_range(1..=3);
        for stmt in gen.schema(ntables) {
            engine.execute(stmt.as_bytes()).expect("schema");
        }
        for name in &gen.table_names {
            model.tables.push(RefTable {
                name: name.clone(),
                columns: COLUMNS.iter().map(|(n, a, _)| (n.to_string(), *a)).collect(),
                rows: Vec::new(),
            });
        }
        // Initial population: at most 200 rows in total.
        let budget = gen.rng().gen_range(0..=200usize);
        let mut total = 0;
        while total < budget {
            let ntab = gen.table_names.len();
            let i = gen.rng().gen_range(0..ntab);
            let t = gen.table_names[i].clone();
            let stmt = gen.insert(&t);
            let Statement::Insert(ins) = &stmt else { unreachable!() };
            let n = model.insert(ins).expect("model insert");
            engine_count(&mut engine, &stmt.to_string()).expect("engine insert");
            total += n as usize;
        }
        report.databases += 1;

        for _ in 0..per_db {
            let sizes: Vec<usize> = model.tables.iter().map(|t| t.rows.len()).collect();
            let write = gen.rng().gen_bool(0.15) && sizes.iter().sum::<usize>() < 260;
            let stmt = if write {
                let ntab = gen.table_names.len();
            let i = gen.rng().gen_range(0..ntab);
            let t = gen.table_names[i].clone();
                match gen.rng().gen_range(0..3) {
                    0 => gen.insert(&t),
                    1 => gen.update(&t),
                    _ => gen.delete(&t),
                }
            } else {
                gen.select(&sizes)
            };
            let sql = stmt.to_string();
            report.statements += 1;
            match sqcached_core::sql::parse(sql.as_bytes()) {
                Ok(back) if back == stmt => {}
                other => report.roundtrip_mismatches.push(format!("{sql} reparsed as {other:?}")),
            }
            match &stmt {
                Statement::Select(sel) => {
                    report.selects += 1;
                    let expected = model.select(sel);
                    engine.set_use_indexes(true);
                    if let Ok(paths) = engine.explain(sql.as_bytes()) {
                        if paths.iter().any(|p| *p != AccessPath::FullScan) {
                            report.indexed_selects += 1;
                        }
                        for p in &paths {
                            match p {
                                AccessPath::IndexSeek { .. } => report.seek_paths += 1,
                                AccessPath::IndexRange { .. } => report.range_paths += 1,
                                AccessPath::FullScan => {}
                            }
                        }
                    }
                    let with_indexes = engine_rows(&mut engine, &sql);
                    engine.set_use_indexes(false);
                    let without = engine_rows(&mut engine, &sql);
                    engine.set_use_indexes(true);
                    let agree = match (&expected, &with_indexes) {
                        (Ok(a), Ok(b)) => rows_identical(a, b),
                        (Err(_), Err(_)) => true,
                        _ => false,
                    };
                    if !agree {
                        report
                            .oracle_mismatches
                            .push(format!("{sql}\n  reference: {expected:?}\n  engine:    {with_indexes:?}"));
                    }
                    let same_plan_result = match (&with_indexes, &without) {
                        (Ok(a), Ok(b)) => rows_identical(a, b),
                        (Err(a), Err(b)) => a == b,
                        _ => false,
                    };
                    if !same_plan_result {
                        report
                            .plan_mismatches
                            .push(format!("{sql}\n  indexed: {with_indexes:?}\n  scan:    {without:?}"));
                    }
                }
                _ => {
                    report.writes += 1;
                    let expected = match &stmt {
                        Statement::Insert(i) => model.insert(i),
                        Statement::Update(u) => model.update(u),
                        Statement::Delete(d) => model.delete(d),
                        _ => unreachable!(),
                    };
                    let got = engine_count(&mut engine, &sql);
                    if expected.is_ok() != got.is_ok() || (expected.is_ok() && expected != got) {
                        report
                            .state_mismatches
                            .push(format!("{sql}\n  model: {expected:?}\n  engine: {got:?}"));
                    }
                    for t in &model.tables {
                        let rows = engine_rows(&mut engine, &format!("SELECT * FROM {}", t.name));
                        if !rows.as_ref().is_ok_and(|r| rows_identical(r, &t.rows)) {
                            report.state_mismatches.push(format!(
                                "after {sql}: table {} differs\n  model:  {:?}\n  engine: {rows:?}",
                                t.name, t.rows
                            ));
                        }
                    }
                    for t in engine.catalog().tables() {
                        if let Err(e) = t.audit() {
                            report.state_mismatches.push(format!("after {sql}: audit failed: {e}"));
                        }
                    }
                }
            }
        }
    }
    report
}

/// Differential test of the B-tree against `BTreeMap`: random inserts,
/// seeks, ranges and deletes, validating the structure every 1,000 ops.
/// Returns the number of checkpoints passed, or the first failure.
pub fn btree_differential(seed: u64, ops: usize, order: usize) -> Result<usize, String> {
    use sqcached_core::btree::BTree;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree: BTree<i64, u64> = BTree::with_order(order);
    let mut oracle: BTreeMap<i64, u64> = BTreeMap::new();
    let mut checkpoints = 0;
    let key_space = (ops as i64 / 4).max(16);
    for op in 1..=ops {
        let k = rng.gen_range(0..key_space);
        match rng.gen_range(0..10) {
            0..=3 => {
                let v = rng.gen::<u64>();
                let expected_dup = oracle.contains_key(&k);
                let got = tree.insert(k, v);
                if got.is_err() != expected_dup {
                    return Err(format!("op {op}: insert {k} duplicate mismatch"));
                }
                oracle.entry(k).or_insert(v);
            }
            4..=5 => {
                if tree.get(&k) != oracle.get(&k) {
                    return Err(format!("op {op}: seek {k} mismatch"));
                }
            }
            6 => {
                let hi = k + rng.gen_range(0..64);
                let a: Vec<(i64, u64)> = tree.range(k..=hi).map(|(k, v)| (*k, *v)).collect();
                let b: Vec<(i64, u64)> = oracle.range(k..=hi).map(|(k, v)| (*k, *v)).collect();
                if a != b {
                    return Err(format!("op {op}: range {k}..={hi} mismatch"));
                }
            }
            _ => {
                if tree.remove(&k) != oracle.remove(&k) {
                    return Err(format!("op {op}: delete {k} mismatch"));
                }
            }
        }
        if op % 1000 == 0 {
            tree.validate().map_err(|e| format!("op {op}: validator: {e}"))?;
            if tree.len() != oracle.len() || !tree.iter().map(|(k, v)| (*k, *v)).eq(oracle.iter().map(|(k, v)| (*k, *v))) {
                return Err(format!("op {op}: contents differ"));
            }
            checkpoints += 1;
        }
    }
    Ok(checkpoints)
}

#[derive(Debug, Default)]
pub struct ExpiryReport {
    pub workloads: usize,
    pub writes: usize,
    pub sweeps: usize,
    pub rows_expired: usize,
}

/// Randomized write workloads under randomized policies. Checks after every
/// write that the row cap holds, that sweeps fire exactly on every K-th
/// write and leave no over-age row, that an immediate second sweep removes
/// nothing, and that the storage audit passes.
pub fn expiry_campaign(seed: u64, workloads: usize, writes_per: usize) -> Result<ExpiryReport, String> {
    use sqcached_core::protocol::PolicyClause;
    use sqcached_core::{EngineConfig, ManualClock};

    let mut report = ExpiryReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in 0..workloads {
        let clock = ManualClock::new(1_000_000);
        let mut engine = Engine::with_clock(EngineConfig::default(), Box::new(clock.clone()));
        engine.execute(b"CREATE TABLE c (k INTEGER, v TEXT)").map_err(|e| e.to_string())?;
        if rng.gen_bool(0.5) {
            engine.execute(b"CREATE INDEX c_k ON c (k)").map_err(|e| e.to_string())?;
        }
        let age_s = rng.gen_bool(0.7).then(|| rng.gen_range(1..=20u64));
        let max_rows = rng.gen_bool(0.7).then(|| rng.gen_range(0..=40usize));
        let ops = rng.gen_range(1..=8u64);
        let mut clauses = vec![PolicyClause::Ops(ops)];
        clauses.extend(age_s.map(PolicyClause::Age));
        clauses.extend(max_rows.map(PolicyClause::Rows));
        engine.set_policy("c", &clauses).map_err(|e| e.to_string())?;

        for i in 1..=writes_per {
            clock.advance(rng.gen_range(0..3000));
            let sweeps_before = engine.stats().sweeps;
            let sql = match rng.gen_range(0..10) {
                0..=5 => {
                    let n = rng.gen_range(1..=4);
                    let rows: Vec<String> = (0..n).map(|_| format!("({}, 'x')", rng.gen_range(0..30))).collect();
                    format!("INSERT INTO c VALUES {}", rows.join(", "))
                }
                6..=7 => format!("UPDATE c SET v = v || 'y' WHERE k = {}", rng.gen_range(0..30)),
                _ => format!("DELETE FROM c WHERE k = {}", rng.gen_range(0..30)),
            };
            engine.execute(sql.as_bytes()).map_err(|e| format!("workload {w}: {sql}: {e}"))?;
            report.writes += 1;
            let now = clock.now_ms();
            let table = engine.catalog().table("c").map_err(|e| e.to_string())?;
            let fired = engine.stats().sweeps - sweeps_before;
            let expected = u64::from(i as u64 % ops == 0);
            if fired != expected {
                return Err(format!("workload {w}: write {i} with K={ops}: {fired} sweeps, expected {expected}"));
            }
            if let Some(cap) = max_rows {
                if table.len() > cap {
                    return Err(format!("workload {w}: {} rows exceed cap {cap}", table.len()));
                }
            }
            if fired == 1 {
                report.sweeps += 1;
                if let Some(age) = age_s {
                    let cutoff = now - age as i64 * 1000;
                    if let Some((_, row)) = table.scan().find(|(_, r)| r.ts_ms < cutoff) {
                        return Err(format!("workload {w}: row at {} survived sweep at {now} (age {age}s)", row.ts_ms));
                    }
                }
            }
            table.audit().map_err(|e| format!("workload {w}: audit: {e}"))?;
            if rng.gen_bool(0.1) {
                engine.sweep("c").map_err(|e| e.to_string())?;
                let again = engine.sweep("c").map_err(|e| e.to_string())?;
                if again != 0 {
                    return Err(format!("workload {w}: second sweep removed {again}"));
                }
            }
        }
        report.rows_expired += (engine.stats().rows_expired_age + engine.stats().rows_expired_rows) as usize;
        report.workloads += 1;
    }
    Ok(report)
}
