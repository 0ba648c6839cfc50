//! The line-based wire protocol.
//!
//! A request is one line: an admin command or a single SQL statement.
//! Responses are framed with a status line (`OK`, `DONE`, `ERR`, `PONG`,
//! `BYE`, or `STAT` lines for STATS) and CRLF line endings. Result fields
//! are tab-separated:
//!
//! | value   | field                                             |
//! |---------|---------------------------------------------------|
//! | Null    | `\N`                                              |
//! | Integer | decimal                                           |
//! | Real    | decimal with `.` (`1.5`, `1.0e100`), `Inf`, `-Inf` |
//! | Blob    | `X'` uppercase hex pairs `'`                      |
//! | Text    | bytes with `\\`, `\t`, `\n`, `\r` escaped          |
//!
//! Text whose escaped form would read as another type (it starts with a
//! digit, sign or `.`, is `Inf`/`NaN`, or starts with `X'`) carries a `\T`
//! prefix, which makes the encoding bijective.

use std::io::{self, BufRead};

use crate::datum::{format_real, Value};
use crate::error::Error;

/// Admin verbs, matched case-insensitively against the first word.
pub const ADMIN_VERBS: [&str; 6] = ["PING", "QUIT", "STATS", "POLICY", "FLUSH", "SWEEP"];

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Sql(Vec<u8>),
    Admin(Admin),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admin {
    Ping,
    Quit,
    Stats,
    Policy { table: String, clauses: Vec<PolicyClause> },
    /// `None` flushes every table.
    Flush(Option<String>),
    Sweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyClause {
    /// Maximum row age in seconds.
    Age(u64),
    Rows(usize),
    Ops(u64),
    /// Disables the age and row-count triggers.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Rows { columns: usize, rows: Vec<Vec<Value>> },
    Done(u64),
    Error { code: String, message: String },
    Pong,
    Bye,
    Stats(Vec<(String, String)>),
}

impl Response {
    pub fn error(err: &Error) -> Self {
        Response::Error {
            code: err.code().to_string(),
            message: err.to_string(),
        }
    }
}

fn protocol_error(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

/// Decodes one request line (without its LF). Returns `None` for an empty
/// line, which is ignored.
pub fn decode_request(line: &[u8]) -> Result<Option<Request>, Error> {
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.contains(&0) {
        return Err(protocol_error("NUL byte in request"));
    }
    let trimmed = line.trim_ascii();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let verb_end = trimmed.iter().position(u8::is_ascii_whitespace).unwrap_or(trimmed.len());
    let verb = &trimmed[..verb_end];
    if !ADMIN_VERBS.iter().any(|v| v.as_bytes().eq_ignore_ascii_case(verb)) {
        return Ok(Some(Request::Sql(trimmed.to_vec())));
    }
    let verb = String::from_utf8_lossy(verb).to_ascii_uppercase();
    let args: Vec<String> = String::from_utf8_lossy(&trimmed[verb_end..])
        .split_ascii_whitespace()
        .map(str::to_string)
        .collect();
    decode_admin(&verb, &args).map(|a| Some(Request::Admin(a)))
}

fn decode_admin(verb: &str, args: &[String]) -> Result<Admin, Error> {
    let no_args = |admin: Admin| {
        if args.is_empty() {
            Ok(admin)
        } else {
            Err(protocol_error(format!("{verb} takes no arguments")))
        }
    };
    match verb {
        "PING" => no_args(Admin::Ping),
        "QUIT" => no_args(Admin::Quit),
        "STATS" => no_args(Admin::Stats),
        "FLUSH" => match args {
            [t] if t.eq_ignore_ascii_case("ALL") => Ok(Admin::Flush(None)),
            [t] => Ok(Admin::Flush(Some(t.clone()))),
            _ => Err(protocol_error("usage: FLUSH table|ALL")),
        },
        "SWEEP" => match args {
            [t] => Ok(Admin::Sweep(t.clone())),
            _ => Err(protocol_error("usage: SWEEP table")),
        },
        "POLICY" => decode_policy(args),
        _ => unreachable!("verb list and match arms agree"),
    }
}

const POLICY_USAGE: &str = "usage: POLICY table AGE seconds|ROWS n|OPS k|OFF ...";

fn decode_policy(args: &[String]) -> Result<Admin, Error> {
    let (table, mut rest) = match args {
        [table, rest @ ..] if !rest.is_empty() => (table.clone(), rest),
        _ => return Err(protocol_error(POLICY_USAGE)),
    };
    let number = |s: &str| s.parse::<u64>().map_err(|_| protocol_error(format!("bad number: {s}")));
    let mut clauses = Vec::new();
    while let [word, tail @ ..] = rest {
        let word = word.to_ascii_uppercase();
        if word == "OFF" {
            clauses.push(PolicyClause::Off);
            rest = tail;
            continue;
        }
        let [arg, tail @ ..] = tail else {
            return Err(protocol_error(POLICY_USAGE));
        };
        clauses.push(match word.as_str() {
            "AGE" => PolicyClause::Age(number(arg)?),
            "ROWS" => PolicyClause::Rows(
                usize::try_from(number(arg)?).map_err(|_| protocol_error(format!("bad number: {arg}")))?,
            ),
            "OPS" => match number(arg)? {
                0 => return Err(protocol_error("OPS must be at least 1")),
                k => PolicyClause::Ops(k),
            },
            _ => return Err(protocol_error(POLICY_USAGE)),
        });
        rest = tail;
    }
    Ok(Admin::Policy { table, clauses })
}

/// Appends the field encoding of `v`.
pub fn encode_field(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Null => out.extend_from_slice(b"\\N"),
        Value::Integer(i) => out.extend_from_slice(i.to_string().as_bytes()),
        Value::Real(r) => out.extend_from_slice(format_real(*r).as_bytes()),
        Value::Blob(b) => {
            out.extend_from_slice(b"X'");
            for byte in b {
                out.extend_from_slice(format!("{byte:02X}").as_bytes());
            }
            out.push(b'\'');
        }
        Value::Text(t) => {
            if looks_typed(t) {
                out.extend_from_slice(b"\\T");
            }
            for &b in t {
                match b {
                    b'\\' => out.extend_from_slice(b"\\\\"),
                    b'\t' => out.extend_from_slice(b"\\t"),
                    b'\n' => out.extend_from_slice(b"\\n"),
                    b'\r' => out.extend_from_slice(b"\\r"),
                    _ => out.push(b),
                }
            }
        }
    }
}

/// Whether an unprefixed field with these leading bytes decodes as a
/// non-text value. A leading backslash is never ambiguous because text
/// backslashes are escaped.
fn looks_typed(field: &[u8]) -> bool {
    matches!(field.first(), Some(b'0'..=b'9' | b'+' | b'-' | b'.'))
        || field == b"Inf"
        || field == b"NaN"
        || field.starts_with(b"X'")
}

pub fn decode_field(field: &[u8]) -> Result<Value, Error> {
    let bad = || protocol_error(format!("bad field: {}", String::from_utf8_lossy(field)));
    if field == b"\\N" {
        return Ok(Value::Null);
    }
    if let Some(rest) = field.strip_prefix(b"\\T") {
        return unescape(rest).map(Value::Text).ok_or_else(bad);
    }
    if field.starts_with(b"X'") {
        let hex = field[2..].strip_suffix(b"'").ok_or_else(bad)?;
        if hex.len() % 2 != 0 {
            return Err(bad());
        }
        return hex
            .chunks(2)
            .map(|pair| {
                std::str::from_utf8(pair)
                    .ok()
                    .and_then(|s| u8::from_str_radix(s, 16).ok())
                    .filter(|_| pair.iter().all(u8::is_ascii_hexdigit))
            })
            .collect::<Option<Vec<u8>>>()
            .map(Value::Blob)
            .ok_or_else(bad);
    }
    if looks_typed(field) {
        let s = std::str::from_utf8(field).map_err(|_| bad())?;
        return match s {
            "Inf" => Ok(Value::Real(f64::INFINITY)),
            "-Inf" => Ok(Value::Real(f64::NEG_INFINITY)),
            "NaN" => Ok(Value::Real(f64::NAN)),
            _ if s.contains(['.', 'e', 'E']) => s.parse::<f64>().map(Value::Real).map_err(|_| bad()),
            _ => s.parse::<i64>().map(Value::Integer).map_err(|_| bad()),
        };
    }
    unescape(field).map(Value::Text).ok_or_else(bad)
}

fn unescape(field: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::with_capacity(field.len());
    let mut bytes = field.iter();
    while let Some(&b) = bytes.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        out.push(match bytes.next()? {
            b'\\' => b'\\',
            b't' => b'\t',
            b'n' => b'\n',
            b'r' => b'\r',
            _ => return None,
        });
    }
    Some(out)
}

/// Replaces bytes that would break the framing of an error or stat line.
fn single_line(s: &str) -> String {
    s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

pub fn encode_response(resp: &Response, out: &mut Vec<u8>) {
    match resp {
        Response::Rows { columns, rows } => {
            out.extend_from_slice(format!("OK {} {}\r\n", columns, rows.len()).as_bytes());
            for row in rows {
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        out.push(b'\t');
                    }
                    encode_field(v, out);
                }
                out.extend_from_slice(b"\r\n");
            }
            out.extend_from_slice(b"END\r\n");
        }
        Response::Done(n) => out.extend_from_slice(format!("DONE {n}\r\n").as_bytes()),
        Response::Error { code, message } => {
            out.extend_from_slice(format!("ERR {} {}\r\n", code, single_line(message)).as_bytes())
        }
        Response::Pong => out.extend_from_slice(b"PONG\r\n"),
        Response::Bye => out.extend_from_slice(b"BYE\r\n"),
        Response::Stats(stats) => {
            for (name, value) in stats {
                out.extend_from_slice(format!("STAT {} {}\r\n", name, single_line(value)).as_bytes());
            }
            out.extend_from_slice(b"END\r\n");
        }
    }
}

/// Reads one line and strips its CRLF; `Ok(None)` on clean EOF.
fn read_line(reader: &mut impl BufRead) -> io::Result<Option<Vec<u8>>> {
    let mut line = Vec::new();
    if reader.read_until(b'\n', &mut line)? == 0 {
        return Ok(None);
    }
    let Some(body) = line.strip_suffix(b"\r\n") else {
        return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "response line not CRLF-terminated"));
    };
    Ok(Some(body.to_vec()))
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Reads one complete response frame, as a client would.
pub fn read_response(reader: &mut impl BufRead) -> io::Result<Response> {
    let eof = || io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed");
    let line = read_line(reader)?.ok_or_else(eof)?;
    let text = String::from_utf8_lossy(&line).into_owned();
    let mut words = text.splitn(3, ' ');
    let status = words.next().unwrap_or("");
    let number = |w: Option<&str>| -> io::Result<u64> {
        w.and_then(|w| w.parse().ok()).ok_or_else(|| invalid(format!("malformed status line: {text}")))
    };
    match status {
        "PONG" if text == "PONG" => Ok(Response::Pong),
        "BYE" if text == "BYE" => Ok(Response::Bye),
        "DONE" => Ok(Response::Done(number(words.next())?)),
        "ERR" => {
            let code = words.next().unwrap_or("").to_string();
            let message = words.next().unwrap_or("").to_string();
            Ok(Response::Error { code, message })
        }
        "OK" => {
            let columns = number(words.next())? as usize;
            let nrows = number(words.next())? as usize;
            let mut rows = Vec::with_capacity(nrows);
            for _ in 0..nrows {
                let line = read_line(reader)?.ok_or_else(eof)?;
                let row = line
                    .split(|&b| b == b'\t')
                    .map(decode_field)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid(e.to_string()))?;
                if row.len() != columns {
                    return Err(invalid(format!("row has {} fields, expected {columns}", row.len())));
                }
                rows.push(row);
            }
            match read_line(reader)?.as_deref() {
                Some(b"END") => Ok(Response::Rows { columns, rows }),
                _ => Err(invalid("missing END after rows".to_string())),
            }
        }
        "STAT" => {
            let mut stats = Vec::new();
            let mut line = Some(line);
            while let Some(l) = line {
                if l == b"END" {
                    return Ok(Response::Stats(stats));
                }
                let l = String::from_utf8_lossy(&l).into_owned();
                let mut parts = l.splitn(3, ' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("STAT"), Some(name), Some(value)) => stats.push((name.to_string(), value.to_string())),
                    _ => return Err(invalid(format!("malformed stat line: {l}"))),
                }
                line = read_line(reader)?;
            }
            Err(eof())
        }
        "END" => Ok(Response::Stats(Vec::new())),
        _ => Err(invalid(format!("unknown status line: {text}"))),
    }
}
