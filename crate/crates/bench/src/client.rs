//! Blocking protocol client used by the load generators.

use std::io::{self, BufReader, Read, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;
use std::path::PathBuf;
use std::time::Duration;

use sqcached_core::protocol::read_response;
use sqcached_core::{Response, Value};

const IO_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("daemon unreachable: {0}")]
    Io(#[from] io::Error),
    #[error("ERR {code} {message}")]
    Server { code: String, message: String },
    #[error("unexpected response: {0}")]
    Unexpected(String),
}

#[derive(Debug, Clone)]
pub enum Endpoint {
    Tcp(String),
    Unix(PathBuf),
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Unix(path) => write!(f, "unix:{}", path.display()),
        }
    }
}

trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

pub struct Connection {
    conn: BufReader<Box<dyn Duplex>>,
    line: Vec<u8>,
}

impl Connection {
    pub fn connect(endpoint: &Endpoint) -> Result<Connection, ClientError> {
        let stream: Box<dyn Duplex> = match endpoint {
            Endpoint::Tcp(addr) => {
                let s = TcpStream::connect(addr)?;
                s.set_nodelay(true)?;
                s.set_read_timeout(Some(IO_TIMEOUT))?;
                Box::new(s)
            }
            Endpoint::Unix(path) => {
                let s = UnixStream::connect(path)?;
                s.set_read_timeout(Some(IO_TIMEOUT))?;
                Box::new(s)
            }
        };
        Ok(Connection {
            conn: BufReader::with_capacity(1 << 16, stream),
            line: Vec::new(),
        })
    }

    /// Sends one request line and reads its response; server errors are `Ok`.
    pub fn request(&mut self, sql: &str) -> Result<Response, ClientError> {
        self.line.clear();
        self.line.extend_from_slice(sql.as_bytes());
        self.line.push(b'\n');
        self.conn.get_mut().write_all(&self.line)?;
        Ok(read_response(&mut self.conn)?)
    }

    fn checked(&mut self, sql: &str) -> Result<Response, ClientError> {
        match self.request(sql)? {
            Response::Error { code, message } => Err(ClientError::Server { code, message }),
            other => Ok(other),
        }
    }

    /// Runs a statement that must answer `DONE n`.
    pub fn done(&mut self, sql: &str) -> Result<u64, ClientError> {
        match self.checked(sql)? {
            Response::Done(n) => Ok(n),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }

    /// Runs a statement that must return rows.
    pub fn rows(&mut self, sql: &str) -> Result<Vec<Vec<Value>>, ClientError> {
        match self.checked(sql)? {
            Response::Rows { rows, .. } => Ok(rows),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }
}
