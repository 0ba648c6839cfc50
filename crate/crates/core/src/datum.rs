//! Dynamically typed cell values.
//!
//! Every cell in every table is a [`Value`]. Values are totally ordered
//! (`Null < numeric < Text < Blob`), which is what lets them serve as B-tree
//! keys, and they carry the arithmetic, comparison and string semantics the
//! executor needs.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// A single cell value.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    /// Byte string; UTF-8 is expected but never enforced.
    Text(Vec<u8>),
    Blob(Vec<u8>),
}

impl Value {
    pub fn text(s: impl Into<Vec<u8>>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Integer(_) | Value::Real(_))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Integer(_) => "integer",
            Value::Real(_) => "real",
            Value::Text(_) => "text",
            Value::Blob(_) => "blob",
        }
    }

    /// Truth value under three-valued logic. `None` means Null.
    ///
    /// Text and Blob are never true.
    pub fn truth(&self) -> Option<bool> {
        match self {
            Value::Null => None,
            Value::Integer(i) => Some(*i != 0),
            Value::Real(r) => Some(*r != 0.0),
            Value::Text(_) | Value::Blob(_) => Some(false),
        }
    }

    pub fn from_bool(b: bool) -> Self {
        Value::Integer(b as i64)
    }

    /// Approximate heap + inline footprint, used for memory accounting.
    pub fn footprint(&self) -> usize {
        const INLINE: usize = std::mem::size_of::<Value>();
        match self {
            Value::Text(b) | Value::Blob(b) => INLINE + b.len(),
            _ => INLINE,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Real(_) => 1,
            Value::Text(_) => 2,
            Value::Blob(_) => 3,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Integer(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.as_bytes().to_vec())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => f.write_str(&format_real(*r)),
            Value::Text(b) => write!(f, "{}", String::from_utf8_lossy(b)),
            Value::Blob(b) => {
                f.write_str("X'")?;
                for byte in b {
                    write!(f, "{byte:02X}")?;
                }
                f.write_str("'")
            }
        }
    }
}

/// Renders a real so that it always reads back as a real: finite values
/// carry a `.`, infinities are `Inf` / `-Inf`.
pub fn format_real(r: f64) -> String {
    if r.is_nan() {
        return "NaN".to_string();
    }
    if r.is_infinite() {
        return if r > 0.0 { "Inf" } else { "-Inf" }.to_string();
    }
    let mut s = format!("{r:?}");
    if !s.contains('.') {
        match s.find('e') {
            Some(pos) => s.insert_str(pos, ".0"),
            None => s.push_str(".0"),
        }
    }
    s
}

/// Compares an integer against a non-NaN real exactly, without rounding the
/// integer through `f64`.
fn cmp_int_real(i: i64, r: f64) -> Ordering {
    if r.is_nan() {
        return Ordering::Greater;
    }
    // 2^63 is exactly representable; every i64 is below it.
    if r >= 9_223_372_036_854_775_808.0 {
        return Ordering::Less;
    }
    if r < -9_223_372_036_854_775_808.0 {
        return Ordering::Greater;
    }
    let whole = r.trunc();
    match i.cmp(&(whole as i64)) {
        Ordering::Equal => {
            let frac = r - whole;
            if frac > 0.0 {
                Ordering::Less
            } else if frac < 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        o => o,
    }
}

fn cmp_real(a: f64, b: f64) -> Ordering {
    match a.partial_cmp(&b) {
        Some(o) => o,
        // NaN sorts below every other number.
        None => a.is_nan().cmp(&b.is_nan()).reverse(),
    }
}

/// Total order over values: `Null < numeric < Text < Blob`.
///
/// Integers and reals compare by numeric value. Text and Blob compare as
/// unsigned byte strings.
pub fn compare_values(a: &Value, b: &Value) -> Ordering {
    use Value::*;
    match (a, b) {
        (Null, Null) => Ordering::Equal,
        (Integer(x), Integer(y)) => x.cmp(y),
        (Real(x), Real(y)) => cmp_real(*x, *y),
        (Integer(x), Real(y)) => cmp_int_real(*x, *y),
        (Real(x), Integer(y)) => cmp_int_real(*y, *x).reverse(),
        (Text(x), Text(y)) | (Blob(x), Blob(y)) => x.cmp(y),
        _ => a.rank().cmp(&b.rank()),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        compare_values(self, other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_values(self, other)
    }
}

/// Structural identity: same variant and same bits. Unlike `==`, this
/// distinguishes `Integer 2` from `Real 2.0`.
pub fn identical(a: &Value, b: &Value) -> bool {
    use Value::*;
    match (a, b) {
        (Null, Null) => true,
        (Integer(x), Integer(y)) => x == y,
        (Real(x), Real(y)) => x.to_bits() == y.to_bits(),
        (Text(x), Text(y)) | (Blob(x), Blob(y)) => x == y,
        _ => false,
    }
}

/// SQL `LIKE`: `%` matches any byte run, `_` exactly one byte, letters fold
/// ASCII case. Only Text subjects can match.
pub fn like_match(pattern: &[u8], subject: &Value) -> bool {
    match subject {
        Value::Text(s) => like_bytes(pattern, s),
        _ => false,
    }
}

fn like_bytes(pattern: &[u8], subject: &[u8]) -> bool {
    // Iterative wildcard matcher; backtracks only to the most recent `%`.
    let (mut p, mut s) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while s < subject.len() {
        if p < pattern.len() {
            match pattern[p] {
                b'%' => {
                    star = Some((p, s));
                    p += 1;
                    continue;
                }
                b'_' => {
                    p += 1;
                    s += 1;
                    continue;
                }
                c if c.eq_ignore_ascii_case(&subject[s]) => {
                    p += 1;
                    s += 1;
                    continue;
                }
                _ => {}
            }
        }
        match star {
            Some((sp, ss)) => {
                p = sp + 1;
                s = ss + 1;
                star = Some((sp, ss + 1));
            }
            None => return false,
        }
    }
    pattern[p..].iter().all(|&c| c == b'%')
}

/// Scalar (non-aggregate) functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFn {
    Abs,
    Upper,
    Lower,
    Length,
}

impl ScalarFn {
    pub fn lookup(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "ABS" => ScalarFn::Abs,
            "UPPER" => ScalarFn::Upper,
            "LOWER" => ScalarFn::Lower,
            "LENGTH" => ScalarFn::Length,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarFn::Abs => "ABS",
            ScalarFn::Upper => "UPPER",
            ScalarFn::Lower => "LOWER",
            ScalarFn::Length => "LENGTH",
        }
    }
}

/// Evaluates a scalar function by name.
pub fn eval_scalar(name: &str, args: &[Value]) -> Result<Value> {
    let func = ScalarFn::lookup(name).ok_or_else(|| Error::UnknownFunction(name.to_string()))?;
    if args.len() != 1 {
        return Err(Error::TypeMismatch(format!(
            "{} expects 1 argument, got {}",
            func.name(),
            args.len()
        )));
    }
    apply_scalar(func, &args[0])
}

pub fn apply_scalar(func: ScalarFn, arg: &Value) -> Result<Value> {
    use Value::*;
    Ok(match (func, arg) {
        (_, Null) => Null,
        (ScalarFn::Abs, Integer(i)) => match i.checked_abs() {
            Some(v) => Integer(v),
            None => Real((*i as f64).abs()),
        },
        (ScalarFn::Abs, Real(r)) => Real(r.abs()),
        (ScalarFn::Abs, other) => {
            return Err(Error::TypeMismatch(format!("ABS of {}", other.type_name())))
        }
        (ScalarFn::Upper, Text(t)) => Text(t.to_ascii_uppercase()),
        (ScalarFn::Lower, Text(t)) => Text(t.to_ascii_lowercase()),
        (ScalarFn::Upper | ScalarFn::Lower, other) => {
            return Err(Error::TypeMismatch(format!(
                "{} of {}",
                func.name(),
                other.type_name()
            )))
        }
        (ScalarFn::Length, Text(b) | Blob(b)) => Integer(b.len() as i64),
        (ScalarFn::Length, other) => Integer(other.to_string().len() as i64),
    })
}

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Concat => "||",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    /// The operator with its operands swapped (`a < b` ⇔ `b > a`).
    pub fn flip(self) -> Self {
        match self {
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            other => other,
        }
    }
}

/// Real results that are NaN become Null.
fn real(r: f64) -> Value {
    if r.is_nan() {
        Value::Null
    } else {
        Value::Real(r)
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Integer(i) => *i as f64,
        Value::Real(r) => *r,
        _ => unreachable!("as_f64 on non-numeric"),
    }
}

fn concat_bytes(v: &Value) -> Result<Vec<u8>> {
    Ok(match v {
        Value::Text(b) => b.clone(),
        Value::Integer(_) | Value::Real(_) => v.to_string().into_bytes(),
        Value::Blob(_) => return Err(Error::TypeMismatch("|| on blob".to_string())),
        Value::Null => unreachable!(),
    })
}

pub fn eval_binop(op: BinOp, a: &Value, b: &Value) -> Result<Value> {
    use Value::*;
    if a.is_null() || b.is_null() {
        if op == BinOp::Concat {
            // Blob operands are rejected even when the other side is Null.
            if matches!(a, Blob(_)) || matches!(b, Blob(_)) {
                return Err(Error::TypeMismatch("|| on blob".to_string()));
            }
        } else if !op.is_comparison() {
            for v in [a, b] {
                if matches!(v, Text(_) | Blob(_)) {
                    return Err(arith_mismatch(op, v));
                }
            }
        }
        return Ok(Null);
    }
    if op.is_comparison() {
        let ord = compare_values(a, b);
        let res = match op {
            BinOp::Eq => ord == Ordering::Equal,
            BinOp::Ne => ord != Ordering::Equal,
            BinOp::Lt => ord == Ordering::Less,
            BinOp::Le => ord != Ordering::Greater,
            BinOp::Gt => ord == Ordering::Greater,
            BinOp::Ge => ord != Ordering::Less,
            _ => unreachable!(),
        };
        return Ok(Value::from_bool(res));
    }
    if op == BinOp::Concat {
        let mut out = concat_bytes(a)?;
        out.extend_from_slice(&concat_bytes(b)?);
        return Ok(Text(out));
    }
    for v in [a, b] {
        if !v.is_numeric() {
            return Err(arith_mismatch(op, v));
        }
    }
    if let (Integer(x), Integer(y)) = (a, b) {
        let (x, y) = (*x, *y);
        let checked = match op {
            BinOp::Add => x.checked_add(y),
            BinOp::Sub => x.checked_sub(y),
            BinOp::Mul => x.checked_mul(y),
            BinOp::Div if y == 0 => return Ok(Null),
            BinOp::Rem if y == 0 => return Ok(Null),
            BinOp::Div => x.checked_div(y),
            // i64::MIN % -1 is mathematically 0.
            BinOp::Rem => Some(x.checked_rem(y).unwrap_or(0)),
            _ => unreachable!(),
        };
        if let Some(v) = checked {
            return Ok(Integer(v));
        }
        // Overflow: fall through to real arithmetic.
    }
    let (x, y) = (as_f64(a), as_f64(b));
    Ok(match op {
        BinOp::Add => real(x + y),
        BinOp::Sub => real(x - y),
        BinOp::Mul => real(x * y),
        BinOp::Div if y == 0.0 => Null,
        BinOp::Rem if y == 0.0 => Null,
        BinOp::Div => real(x / y),
        BinOp::Rem => real(x % y),
        _ => unreachable!(),
    })
}

fn arith_mismatch(op: BinOp, v: &Value) -> Error {
    Error::TypeMismatch(format!("operator {} on {}", op.symbol(), v.type_name()))
}

pub fn negate(v: &Value) -> Result<Value> {
    Ok(match v {
        Value::Null => Value::Null,
        Value::Integer(i) => match i.checked_neg() {
            Some(n) => Value::Integer(n),
            None => Value::Real(-(*i as f64)),
        },
        Value::Real(r) => Value::Real(-r),
        other => {
            return Err(Error::TypeMismatch(format!(
                "unary - on {}",
                other.type_name()
            )))
        }
    })
}

/// Parses text that looks like a number. Accepts an optional sign, digits,
/// an optional fraction and an optional exponent; no surrounding spaces.
pub fn parse_numeric(bytes: &[u8]) -> Option<Value> {
    let s = std::str::from_utf8(bytes).ok()?;
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let mut digits = 0;
    let mut is_real = false;
    let mut chars = body.bytes().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_digit() {
            digits += 1;
            chars.next();
        } else {
            break;
        }
    }
    if chars.peek() == Some(&b'.') {
        is_real = true;
        chars.next();
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() {
                digits += 1;
                chars.next();
            } else {
                break;
            }
        }
    }
    if digits == 0 {
        return None;
    }
    if matches!(chars.peek(), Some(b'e' | b'E')) {
        is_real = true;
        chars.next();
        if matches!(chars.peek(), Some(b'+' | b'-')) {
            chars.next();
        }
        let mut exp_digits = 0;
        while let Some(&c) = chars.peek() {
            if c.is_ascii_digit() {
                exp_digits += 1;
                chars.next();
            } else {
                break;
            }
        }
        if exp_digits == 0 {
            return None;
        }
    }
    if chars.next().is_some() {
        return None;
    }
    if !is_real {
        if let Ok(i) = s.parse::<i64>() {
            return Some(Value::Integer(i));
        }
    }
    s.parse::<f64>().ok().filter(|r| r.is_finite()).map(Value::Real)
}
