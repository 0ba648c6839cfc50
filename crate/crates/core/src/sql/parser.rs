//! Recursive-descent parser.
//!
//! Expression precedence, loosest first:
//! `OR`, `AND`, `NOT`, comparison / `LIKE` / `IS`, `+ -`, `* / %`,
//! unary `-`, `||`.

use crate::datum::{BinOp, Value};
use crate::error::{Error, Result};
use crate::storage::Affinity;

use super::ast::*;
use super::lexer::{tokenize, Keyword, Token, TokenKind};

/// Upper bound on operators, calls and parentheses in one expression,
/// which bounds the depth of the tree.
pub const MAX_EXPR_NODES: usize = 1000;
/// Upper bound on nested parentheses, calls, `NOT` and unary minus.
pub const MAX_NESTING: usize = 100;

/// Parses exactly one statement (an optional trailing `;` is allowed).
pub fn parse(input: &[u8]) -> Result<Statement> {
    let tokens = tokenize(input)?;
    parse_tokens(&tokens, input.len())
}

pub fn parse_tokens(tokens: &[Token], input_len: usize) -> Result<Statement> {
    let mut p = Parser {
        tokens,
        pos: 0,
        end: input_len,
        nodes: 0,
        nesting: 0,
    };
    let stmt = p.statement()?;
    p.eat_punct(';');
    if p.pos < tokens.len() {
        return Err(p.expected("end of statement"));
    }
    Ok(stmt)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
    nodes: usize,
    nesting: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.span.start)
    }

    fn expected(&self, what: &str) -> Error {
        let found = match self.peek() {
            Some(k) => k.to_string(),
            None => "end of input".to_string(),
        };
        Error::parse(self.offset(), format!("expected {what}, found {found}"))
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        if self.peek() == Some(&TokenKind::Keyword(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: Keyword) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.expected(kw.as_str()))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&TokenKind::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.expected(&format!("'{c}'")))
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(TokenKind::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.expected(what)),
        }
    }

    fn comma_list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        let mut out = vec![item(self)?];
        while self.eat_punct(',') {
            out.push(item(self)?);
        }
        Ok(out)
    }

    fn paren_names(&mut self, what: &str) -> Result<Vec<String>> {
        self.expect_punct('(')?;
        let names = self.comma_list(|p| p.ident(what))?;
        self.expect_punct(')')?;
        Ok(names)
    }

    fn statement(&mut self) -> Result<Statement> {
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::Select)) => self.select().map(Statement::Select),
            Some(TokenKind::Keyword(Keyword::Insert)) => self.insert(),
            Some(TokenKind::Keyword(Keyword::Update)) => self.update(),
            Some(TokenKind::Keyword(Keyword::Delete)) => self.delete(),
            Some(TokenKind::Keyword(Keyword::Create)) => self.create(),
            Some(TokenKind::Keyword(Keyword::Drop)) => {
                self.pos += 1;
                self.expect_keyword(Keyword::Table)?;
                let name = self.ident("table name")?;
                Ok(Statement::DropTable { name })
            }
            _ => Err(self.expected("statement")),
        }
    }

    fn create(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Create)?;
        if self.eat_keyword(Keyword::Table) {
            let name = self.ident("table name")?;
            self.expect_punct('(')?;
            let columns = self.comma_list(|p| {
                let name = p.ident("column name")?;
                let affinity = match p.peek() {
                    Some(TokenKind::Ident(t)) => {
                        let a = Affinity::from_type_name(t)
                            .ok_or_else(|| Error::parse(p.offset(), format!("unknown type {t}")))?;
                        p.pos += 1;
                        a
                    }
                    _ => Affinity::None,
                };
                Ok(ColumnDef { name, affinity })
            })?;
            self.expect_punct(')')?;
            Ok(Statement::CreateTable(CreateTable { name, columns }))
        } else if self.eat_keyword(Keyword::Index) {
            let name = self.ident("index name")?;
            self.expect_keyword(Keyword::On)?;
            let table = self.ident("table name")?;
            let columns = self.paren_names("column name")?;
            Ok(Statement::CreateIndex(CreateIndex {
                name,
                table,
                columns,
            }))
        } else {
            Err(self.expected("TABLE or INDEX"))
        }
    }

    fn insert(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Insert)?;
        self.expect_keyword(Keyword::Into)?;
        let table = self.ident("table name")?;
        let columns = if self.peek() == Some(&TokenKind::Punct('(')) {
            Some(self.paren_names("column name")?)
        } else {
            None
        };
        self.expect_keyword(Keyword::Values)?;
        let rows = self.comma_list(|p| {
            p.expect_punct('(')?;
            let row = p.comma_list(Self::expr)?;
            p.expect_punct(')')?;
            Ok(row)
        })?;
        Ok(Statement::Insert(Insert {
            table,
            columns,
            rows,
        }))
    }

    fn select(&mut self) -> Result<Select> {
        self.expect_keyword(Keyword::Select)?;
        let projections = self.comma_list(|p| {
            if p.eat_op("*") {
                return Ok(Projection::Star);
            }
            let expr = p.expr()?;
            let alias = if p.eat_keyword(Keyword::As) {
                Some(p.ident("alias")?)
            } else {
                None
            };
            Ok(Projection::Expr { expr, alias })
        })?;
        let from = if self.eat_keyword(Keyword::From) {
            self.comma_list(|p| {
                let name = p.ident("table name")?;
                let alias = if p.eat_keyword(Keyword::As) {
                    Some(p.ident("alias")?)
                } else if let Some(TokenKind::Ident(_)) = p.peek() {
                    Some(p.ident("alias")?)
                } else {
                    None
                };
                Ok(TableRef { name, alias })
            })?
        } else {
            Vec::new()
        };
        let filter = self.opt_where()?;
        let mut group_by = Vec::new();
        if self.eat_keyword(Keyword::Group) {
            self.expect_keyword(Keyword::By)?;
            group_by = self.comma_list(Self::column_ref)?;
        }
        let mut order_by = Vec::new();
        if self.eat_keyword(Keyword::Order) {
            self.expect_keyword(Keyword::By)?;
            order_by = self.comma_list(|p| {
                let expr = p.expr()?;
                let desc = if p.eat_keyword(Keyword::Desc) {
                    true
                } else {
                    p.eat_keyword(Keyword::Asc);
                    false
                };
                Ok(OrderTerm { expr, desc })
            })?;
        }
        let limit = if self.eat_keyword(Keyword::Limit) {
            match self.peek() {
                Some(TokenKind::Int(n)) if *n >= 0 => {
                    let n = *n as u64;
                    self.pos += 1;
                    Some(n)
                }
                _ => return Err(self.expected("non-negative integer")),
            }
        } else {
            None
        };
        Ok(Select {
            projections,
            from,
            filter,
            group_by,
            order_by,
            limit,
        })
    }

    fn update(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Update)?;
        let table = self.ident("table name")?;
        self.expect_keyword(Keyword::Set)?;
        let assignments = self.comma_list(|p| {
            let col = p.ident("column name")?;
            if !p.eat_op("=") {
                return Err(p.expected("'='"));
            }
            Ok((col, p.expr()?))
        })?;
        let filter = self.opt_where()?;
        Ok(Statement::Update(Update {
            table,
            assignments,
            filter,
        }))
    }

    fn delete(&mut self) -> Result<Statement> {
        self.expect_keyword(Keyword::Delete)?;
        self.expect_keyword(Keyword::From)?;
        let table = self.ident("table name")?;
        let filter = self.opt_where()?;
        Ok(Statement::Delete(Delete { table, filter }))
    }

    fn opt_where(&mut self) -> Result<Option<Expr>> {
        if self.eat_keyword(Keyword::Where) {
            Ok(Some(self.expr()?))
        } else {
            Ok(None)
        }
    }

    fn column_ref(&mut self) -> Result<ColumnRef> {
        let first = self.ident("column name")?;
        if self.eat_punct('.') {
            let column = self.ident("column name")?;
            Ok(ColumnRef {
                table: Some(first),
                column,
            })
        } else {
            Ok(ColumnRef::bare(first))
        }
    }

    /// A complete expression; the node budget starts afresh.
    fn expr(&mut self) -> Result<Expr> {
        self.nodes = 0;
        self.sub_expr()
    }

    fn node(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > MAX_EXPR_NODES {
            return Err(Error::parse(self.offset(), "expression too complex"));
        }
        Ok(())
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        if self.nesting >= MAX_NESTING {
            return Err(Error::parse(self.offset(), "expression too complex"));
        }
        self.nesting += 1;
        let r = f(self);
        self.nesting -= 1;
        r
    }

    fn sub_expr(&mut self) -> Result<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_keyword(Keyword::Or) {
            self.node()?;
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_keyword(Keyword::And) {
            self.node()?;
            let right = self.not_expr()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.eat_keyword(Keyword::Not) {
            self.node()?;
            return Ok(Expr::Not(Box::new(self.nested(Self::not_expr)?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr> {
        let mut left = self.add_expr()?;
        loop {
            if self.eat_keyword(Keyword::Like) {
                self.node()?;
                let pattern = self.add_expr()?;
                left = Expr::Like {
                    expr: Box::new(left),
                    pattern: Box::new(pattern),
                };
                continue;
            }
            if self.eat_keyword(Keyword::Is) {
                self.node()?;
                let negated = self.eat_keyword(Keyword::Not);
                self.expect_keyword(Keyword::Null)?;
                left = Expr::IsNull {
                    expr: Box::new(left),
                    negated,
                };
                continue;
            }
            let op = match self.peek() {
                Some(TokenKind::Op("=")) => BinOp::Eq,
                Some(TokenKind::Op("<>")) => BinOp::Ne,
                Some(TokenKind::Op("<")) => BinOp::Lt,
                Some(TokenKind::Op("<=")) => BinOp::Le,
                Some(TokenKind::Op(">")) => BinOp::Gt,
                Some(TokenKind::Op(">=")) => BinOp::Ge,
                _ => return Ok(left),
            };
            self.pos += 1;
            self.node()?;
            let right = self.add_expr()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut left = self.mul_expr()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                return Ok(left);
            };
            self.node()?;
            let right = self.mul_expr()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut left = self.unary_expr()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Rem
            } else {
                return Ok(left);
            };
            self.node()?;
            let right = self.unary_expr()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn unary_expr(&mut self) -> Result<Expr> {
        if self.eat_op("-") {
            self.node()?;
            return Ok(Expr::Neg(Box::new(self.nested(Self::unary_expr)?)));
        }
        self.concat_expr()
    }

    fn concat_expr(&mut self) -> Result<Expr> {
        let mut left = self.primary()?;
        while self.eat_op("||") {
            self.node()?;
            let right = self.primary()?;
            left = Expr::binary(BinOp::Concat, left, right);
        }
        Ok(left)
    }

    fn primary(&mut self) -> Result<Expr> {
        let lit = match self.peek() {
            Some(TokenKind::Int(i)) => Some(Value::Integer(*i)),
            Some(TokenKind::Real(r)) => Some(Value::Real(*r)),
            Some(TokenKind::Str(s)) => Some(Value::Text(s.clone())),
            Some(TokenKind::Blob(b)) => Some(Value::Blob(b.clone())),
            Some(TokenKind::Keyword(Keyword::Null)) => Some(Value::Null),
            _ => None,
        };
        if let Some(v) = lit {
            self.pos += 1;
            return Ok(Expr::Literal(v));
        }
        if self.eat_punct('(') {
            self.node()?;
            let e = self.nested(Self::sub_expr)?;
            self.expect_punct(')')?;
            return Ok(e);
        }
        if let Some(TokenKind::Ident(_)) = self.peek() {
            if self.tokens.get(self.pos + 1).map(|t| &t.kind) == Some(&TokenKind::Punct('(')) {
                let name = self.ident("function name")?;
                self.pos += 1;
                self.node()?;
                let args = if self.eat_op("*") {
                    FnArgs::Star
                } else if self.peek() == Some(&TokenKind::Punct(')')) {
                    FnArgs::List(Vec::new())
                } else {
                    FnArgs::List(self.nested(|p| p.comma_list(Self::sub_expr))?)
                };
                self.expect_punct(')')?;
                return Ok(Expr::Call { name, args });
            }
            return Ok(Expr::Column(self.column_ref()?));
        }
        Err(self.expected("expression"))
    }
}
