//! Statement syntax tree. `Display` renders a statement back to SQL that
//! reparses to an equal tree.

use std::fmt;

use crate::datum::{BinOp, Value};
use crate::storage::Affinity;

use super::lexer::Keyword;

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateTable(CreateTable),
    DropTable { name: String },
    CreateIndex(CreateIndex),
    Insert(Insert),
    Select(Select),
    Update(Update),
    Delete(Delete),
}

impl Statement {
    pub fn verb(&self) -> &'static str {
        match self {
            Statement::CreateTable(_) => "create_table",
            Statement::DropTable { .. } => "drop_table",
            Statement::CreateIndex(_) => "create_index",
            Statement::Insert(_) => "insert",
            Statement::Select(_) => "select",
            Statement::Update(_) => "update",
            Statement::Delete(_) => "delete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub affinity: Affinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateTable {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateIndex {
    pub name: String,
    pub table: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Insert {
    pub table: String,
    pub columns: Option<Vec<String>>,
    pub rows: Vec<Vec<Expr>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    /// The name column references use to qualify this table.
    pub fn visible_name(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Star,
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderTerm {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub projections: Vec<Projection>,
    pub from: Vec<TableRef>,
    pub filter: Option<Expr>,
    pub group_by: Vec<ColumnRef>,
    pub order_by: Vec<OrderTerm>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub table: String,
    pub assignments: Vec<(String, Expr)>,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delete {
    pub table: String,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
}

impl ColumnRef {
    pub fn bare(column: impl Into<String>) -> Self {
        ColumnRef {
            table: None,
            column: column.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FnArgs {
    /// `COUNT(*)`
    Star,
    List(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Value),
    Column(ColumnRef),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary {
        op: BinOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Like {
        expr: Box<Expr>,
        pattern: Box<Expr>,
    },
    IsNull {
        expr: Box<Expr>,
        negated: bool,
    },
    Call {
        name: String,
        args: FnArgs,
    },
}

impl Expr {
    pub fn binary(op: BinOp, left: Expr, right: Expr) -> Self {
        Expr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn column(name: &str) -> Self {
        Expr::Column(ColumnRef::bare(name))
    }

    /// Visits this expression and every sub-expression, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Literal(_) | Expr::Column(_) => {}
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::IsNull { expr, .. } => expr.walk(f),
            Expr::Binary { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Like { expr, pattern } => {
                expr.walk(f);
                pattern.walk(f);
            }
            Expr::Call { args, .. } => {
                if let FnArgs::List(args) = args {
                    for a in args {
                        a.walk(f);
                    }
                }
            }
        }
    }
}

pub const AGGREGATES: [&str; 5] = ["COUNT", "SUM", "AVG", "MIN", "MAX"];

pub fn is_aggregate_name(name: &str) -> bool {
    AGGREGATES.iter().any(|a| a.eq_ignore_ascii_case(name))
}

struct Ident<'a>(&'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        let plain = s
            .bytes()
            .next()
            .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_')
            && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
            && Keyword::lookup(s).is_none();
        if plain {
            f.write_str(s)
        } else {
            write!(f, "\"{}\"", s.replace('"', "\"\""))
        }
    }
}

fn write_list<T>(
    f: &mut fmt::Formatter<'_>,
    items: &[T],
    mut each: impl FnMut(&mut fmt::Formatter<'_>, &T) -> fmt::Result,
) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        each(f, item)?;
    }
    Ok(())
}

fn write_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Text(bytes) => {
            f.write_str("'")?;
            // Lossy for non-UTF-8 text.
            let s = String::from_utf8_lossy(bytes);
            f.write_str(&s.replace('\'', "''"))?;
            f.write_str("'")
        }
        other => write!(f, "{other}"),
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = &self.table {
            write!(f, "{}.", Ident(t))?;
        }
        write!(f, "{}", Ident(&self.column))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write_literal(f, v),
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Not(e) => write!(f, "(NOT {e})"),
            Expr::Binary { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::And(l, r) => write!(f, "({l} AND {r})"),
            Expr::Or(l, r) => write!(f, "({l} OR {r})"),
            Expr::Like { expr, pattern } => write!(f, "({expr} LIKE {pattern})"),
            Expr::IsNull { expr, negated } => {
                write!(f, "({expr} IS {}NULL)", if *negated { "NOT " } else { "" })
            }
            Expr::Call { name, args } => {
                write!(f, "{}(", Ident(name))?;
                match args {
                    FnArgs::Star => f.write_str("*")?,
                    FnArgs::List(args) => write_list(f, args, |f, a| write!(f, "{a}"))?,
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::CreateTable(ct) => {
                write!(f, "CREATE TABLE {} (", Ident(&ct.name))?;
                write_list(f, &ct.columns, |f, c| {
                    write!(f, "{}", Ident(&c.name))?;
                    if let Some(t) = c.affinity.type_name() {
                        write!(f, " {t}")?;
                    }
                    Ok(())
                })?;
                f.write_str(")")
            }
            Statement::DropTable { name } => write!(f, "DROP TABLE {}", Ident(name)),
            Statement::CreateIndex(ci) => {
                write!(f, "CREATE INDEX {} ON {} (", Ident(&ci.name), Ident(&ci.table))?;
                write_list(f, &ci.columns, |f, c| write!(f, "{}", Ident(c)))?;
                f.write_str(")")
            }
            Statement::Insert(ins) => {
                write!(f, "INSERT INTO {}", Ident(&ins.table))?;
                if let Some(cols) = &ins.columns {
                    f.write_str(" (")?;
                    write_list(f, cols, |f, c| write!(f, "{}", Ident(c)))?;
                    f.write_str(")")?;
                }
                f.write_str(" VALUES ")?;
                write_list(f, &ins.rows, |f, row| {
                    f.write_str("(")?;
                    write_list(f, row, |f, e| write!(f, "{e}"))?;
                    f.write_str(")")
                })
            }
            Statement::Select(sel) => {
                f.write_str("SELECT ")?;
                write_list(f, &sel.projections, |f, p| match p {
                    Projection::Star => f.write_str("*"),
                    Projection::Expr { expr, alias } => {
                        write!(f, "{expr}")?;
                        if let Some(a) = alias {
                            write!(f, " AS {}", Ident(a))?;
                        }
                        Ok(())
                    }
                })?;
                if !sel.from.is_empty() {
                    f.write_str(" FROM ")?;
                    write_list(f, &sel.from, |f, t| {
                        write!(f, "{}", Ident(&t.name))?;
                        if let Some(a) = &t.alias {
                            write!(f, " AS {}", Ident(a))?;
                        }
                        Ok(())
                    })?;
                }
                if let Some(w) = &sel.filter {
                    write!(f, " WHERE {w}")?;
                }
                if !sel.group_by.is_empty() {
                    f.write_str(" GROUP BY ")?;
                    write_list(f, &sel.group_by, |f, c| write!(f, "{c}"))?;
                }
                if !sel.order_by.is_empty() {
                    f.write_str(" ORDER BY ")?;
                    write_list(f, &sel.order_by, |f, o| {
                        write!(f, "{}{}", o.expr, if o.desc { " DESC" } else { "" })
                    })?;
                }
                if let Some(n) = sel.limit {
                    write!(f, " LIMIT {n}")?;
                }
                Ok(())
            }
            Statement::Update(up) => {
                write!(f, "UPDATE {} SET ", Ident(&up.table))?;
                write_list(f, &up.assignments, |f, (c, e)| write!(f, "{} = {e}", Ident(c)))?;
                if let Some(w) = &up.filter {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
            Statement::Delete(del) => {
                write!(f, "DELETE FROM {}", Ident(&del.table))?;
                if let Some(w) = &del.filter {
                    write!(f, " WHERE {w}")?;
                }
                Ok(())
            }
        }
    }
}
