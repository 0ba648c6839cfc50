use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    From,
    Where,
    Group,
    By,
    Order,
    Asc,
    Desc,
    Limit,
    Insert,
    Into,
    Values,
    Update,
    Set,
    Delete,
    Create,
    Table,
    Index,
    On,
    Drop,
    And,
    Or,
    Not,
    Like,
    Is,
    Null,
    As,
}

impl Keyword {
    const ALL: [(Keyword, &'static str); 27] = [
        (Keyword::Select, "SELECT"),
        (Keyword::From, "FROM"),
        (Keyword::Where, "WHERE"),
        (Keyword::Group, "GROUP"),
        (Keyword::By, "BY"),
        (Keyword::Order, "ORDER"),
        (Keyword::Asc, "ASC"),
        (Keyword::Desc, "DESC"),
        (Keyword::Limit, "LIMIT"),
        (Keyword::Insert, "INSERT"),
        (Keyword::Into, "INTO"),
        (Keyword::Values, "VALUES"),
        (Keyword::Update, "UPDATE"),
        (Keyword::Set, "SET"),
        (Keyword::Delete, "DELETE"),
        (Keyword::Create, "CREATE"),
        (Keyword::Table, "TABLE"),
        (Keyword::Index, "INDEX"),
        (Keyword::On, "ON"),
        (Keyword::Drop, "DROP"),
        (Keyword::And, "AND"),
        (Keyword::Or, "OR"),
        (Keyword::Not, "NOT"),
        (Keyword::Like, "LIKE"),
        (Keyword::Is, "IS"),
        (Keyword::Null, "NULL"),
        (Keyword::As, "AS"),
    ];

    pub fn lookup(word: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .find(|(_, s)| s.eq_ignore_ascii_case(word))
            .map(|(k, _)| *k)
    }

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(k, _)| *k == self).map(|(_, s)| *s).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Str(Vec<u8>),
    Blob(Vec<u8>),
    Int(i64),
    Real(f64),
    /// `+ - * / % || = <> < <= > >=`
    Op(&'static str),
    /// `( ) , . ;`
    Punct(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "{}", k.as_str()),
            TokenKind::Ident(s) => write!(f, "identifier {s}"),
            TokenKind::Str(_) => f.write_str("string literal"),
            TokenKind::Blob(_) => f.write_str("blob literal"),
            TokenKind::Int(i) => write!(f, "{i}"),
            TokenKind::Real(r) => write!(f, "{r}"),
            TokenKind::Op(o) => write!(f, "'{o}'"),
            TokenKind::Punct(c) => write!(f, "'{c}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

/// Splits one statement into tokens. Keywords are case-insensitive;
/// identifiers may be double-quoted.
pub fn tokenize(input: &[u8]) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < input.len() {
        let c = input[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'\'' => {
                let (s, end) = lex_string(input, i)?;
                i = end;
                TokenKind::Str(s)
            }
            b'x' | b'X' if input.get(i + 1) == Some(&b'\'') => {
                let (s, end) = lex_string(input, i + 1)?;
                i = end;
                TokenKind::Blob(decode_hex(&s).ok_or_else(|| Error::parse(start, "bad blob literal"))?)
            }
            b'"' => {
                let (s, end) = lex_quoted_ident(input, i)?;
                i = end;
                TokenKind::Ident(s)
            }
            b'0'..=b'9' => {
                let (kind, end) = lex_number(input, i)?;
                i = end;
                kind
            }
            b'.' if input.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                let (kind, end) = lex_number(input, i)?;
                i = end;
                kind
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < input.len() && (input[i].is_ascii_alphanumeric() || input[i] == b'_') {
                    i += 1;
                }
                let word = std::str::from_utf8(&input[start..i]).expect("ascii");
                match Keyword::lookup(word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word.to_string()),
                }
            }
            b'(' | b')' | b',' | b'.' | b';' => {
                i += 1;
                TokenKind::Punct(c as char)
            }
            _ => {
                let two = input.get(i..i + 2);
                let op = match two {
                    Some(b"||") => "||",
                    Some(b"<>") | Some(b"!=") => "<>",
                    Some(b"<=") => "<=",
                    Some(b">=") => ">=",
                    Some(b"==") => "=",
                    _ => "",
                };
                if !op.is_empty() {
                    i += 2;
                    TokenKind::Op(op)
                } else {
                    let op = match c {
                        b'+' => "+",
                        b'-' => "-",
                        b'*' => "*",
                        b'/' => "/",
                        b'%' => "%",
                        b'=' => "=",
                        b'<' => "<",
                        b'>' => ">",
                        _ => return Err(Error::parse(i, format!("illegal byte 0x{c:02X}"))),
                    };
                    i += 1;
                    TokenKind::Op(op)
                }
            }
        };
        out.push(Token { kind, span: start..i });
    }
    Ok(out)
}

/// Reads a `'...'` literal starting at the opening quote; `''` is a quote.
fn lex_string(input: &[u8], open: usize) -> Result<(Vec<u8>, usize)> {
    let mut out = Vec::new();
    let mut i = open + 1;
    loop {
        match input.get(i) {
            None => return Err(Error::parse(open, "unterminated string")),
            Some(b'\'') if input.get(i + 1) == Some(&b'\'') => {
                out.push(b'\'');
                i += 2;
            }
            Some(b'\'') => return Ok((out, i + 1)),
            Some(&b) => {
                out.push(b);
                i += 1;
            }
        }
    }
}

fn lex_quoted_ident(input: &[u8], open: usize) -> Result<(String, usize)> {
    let mut out = Vec::new();
    let mut i = open + 1;
    loop {
        match input.get(i) {
            None => return Err(Error::parse(open, "unterminated identifier")),
            Some(b'"') if input.get(i + 1) == Some(&b'"') => {
                out.push(b'"');
                i += 2;
            }
            Some(b'"') => break,
            Some(&b) => {
                out.push(b);
                i += 1;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::parse(open, "empty identifier"));
    }
    let s = String::from_utf8(out).map_err(|_| Error::parse(open, "identifier is not UTF-8"))?;
    Ok((s, i + 1))
}

fn decode_hex(digits: &[u8]) -> Option<Vec<u8>> {
    if digits.len() % 2 != 0 {
        return None;
    }
    digits
        .chunks(2)
        .map(|pair| {
            let hi = (pair[0] as char).to_digit(16)?;
            let lo = (pair[1] as char).to_digit(16)?;
            Some((hi * 16 + lo) as u8)
        })
        .collect()
}

fn lex_number(input: &[u8], start: usize) -> Result<(TokenKind, usize)> {
    let mut i = start;
    let digits = |i: &mut usize| {
        while *i < input.len() && input[*i].is_ascii_digit() {
            *i += 1;
        }
    };
    digits(&mut i);
    let mut is_real = false;
    if input.get(i) == Some(&b'.') {
        is_real = true;
        i += 1;
        digits(&mut i);
    }
    if matches!(input.get(i), Some(b'e' | b'E')) {
        is_real = true;
        i += 1;
        if matches!(input.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let exp_start = i;
        digits(&mut i);
        if i == exp_start {
            return Err(Error::parse(start, "bad number"));
        }
    }
    if input.get(i).is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_' || *b == b'.') {
        return Err(Error::parse(start, "bad number"));
    }
    let text = std::str::from_utf8(&input[start..i]).expect("ascii");
    if !is_real {
        if let Ok(v) = text.parse::<i64>() {
            return Ok((TokenKind::Int(v), i));
        }
    }
    match text.parse::<f64>() {
        Ok(r) if r.is_finite() => Ok((TokenKind::Real(r), i)),
        _ => Err(Error::parse(start, "bad number")),
    }
}
