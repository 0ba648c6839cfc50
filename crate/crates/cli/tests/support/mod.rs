//! Wire-level test helpers: a blocking client and the conformance script runner.
#![allow(dead_code)]

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::os::unix::net::UnixStream;
use std::path::PathBuf;
use std::time::Duration;

use sqcached::{spawn, RunningServer, ServerConfig};
use sqcached_core::protocol::read_response;
use sqcached_core::{Engine, Response};

pub const SCRIPT: &str = include_str!("../../../../conformance/protocol.txt");
pub const READ_TIMEOUT: Duration = Duration::from_secs(20);

pub trait Duplex: Read + Write + Send {}
impl<T: Read + Write + Send> Duplex for T {}

#[derive(Debug, Clone)]
pub enum Address {
    Tcp(SocketAddr),
    Unix(PathBuf),
}

impl Address {
    pub fn connect(&self) -> io::Result<Box<dyn Duplex>> {
        Ok(match self {
            Address::Tcp(addr) => {
                let s = TcpStream::connect(addr)?;
                s.set_nodelay(true)?;
                s.set_read_timeout(Some(READ_TIMEOUT))?;
                Box::new(s)
            }
            Address::Unix(path) => {
                let s = UnixStream::connect(path)?;
                s.set_read_timeout(Some(READ_TIMEOUT))?;
                Box::new(s)
            }
        })
    }
}

/// One request in flight at a time.
pub struct Client {
    conn: BufReader<Box<dyn Duplex>>,
}

impl Client {
    pub fn connect(addr: &Address) -> io::Result<Client> {
        Ok(Client {
            conn: BufReader::new(addr.connect()?),
        })
    }

    pub fn send(&mut self, line: &[u8]) -> io::Result<()> {
        let mut buf = line.to_vec();
        buf.push(b'\n');
        self.conn.get_mut().write_all(&buf)
    }

    pub fn recv(&mut self) -> io::Result<Response> {
        read_response(&mut self.conn)
    }

    pub fn request(&mut self, line: &str) -> io::Result<Response> {
        self.send(line.as_bytes())?;
        self.recv()
    }

    /// Raw response line including its CRLF; empty at EOF.
    pub fn raw_line(&mut self) -> io::Result<Vec<u8>> {
        let mut line = Vec::new();
        self.conn.read_until(b'\n', &mut line)?;
        Ok(line)
    }

    pub fn is_closed(&mut self) -> bool {
        matches!(self.conn.fill_buf(), Ok([]) | Err(_))
    }
}

pub struct TestServer {
    pub running: Option<RunningServer>,
    pub tcp: Address,
    pub unix: Address,
    _dir: tempfile::TempDir,
}

impl TestServer {
    pub fn start(config: ServerConfig) -> TestServer {
        Self::start_with(config, |c| Engine::new(c.engine_config()))
    }

    pub fn start_with(mut config: ServerConfig, engine: impl FnOnce(&ServerConfig) -> Engine) -> TestServer {
        let dir = tempfile::tempdir().expect("tempdir");
        config.tcp = Some("127.0.0.1:0".parse().unwrap());
        config.unix = Some(dir.path().join("sqcached.sock"));
        let engine = engine(&config);
        let running = spawn(config, engine).expect("server starts");
        let tcp = Address::Tcp(running.tcp_addr.expect("tcp listener"));
        let unix = Address::Unix(running.unix_path.clone().expect("unix listener"));
        TestServer {
            running: Some(running),
            tcp,
            unix,
            _dir: dir,
        }
    }

    pub fn client(&self) -> Client {
        Client::connect(&self.tcp).expect("connect")
    }

    pub fn stop(mut self) -> Engine {
        self.running.take().expect("running").stop().expect("clean shutdown")
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(running) = self.running.take() {
            let _ = running.stop();
        }
    }
}

/// The configuration the conformance script assumes.
pub fn conformance_config() -> ServerConfig {
    ServerConfig {
        max_response_rows: 20,
        max_line_bytes: 4096,
        ..ServerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Exact(Vec<u8>),
    Prefix(Vec<u8>),
    Closed,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub line: usize,
    pub request: Vec<u8>,
    pub expect: Vec<Expect>,
}

/// Decodes `\t \r \n \0 \\ \xHH` in a `>>` request.
pub fn unescape(s: &str) -> Vec<u8> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'\\' && i + 1 < b.len() {
            let (byte, len) = match b[i + 1] {
                b't' => (b'\t', 2),
                b'r' => (b'\r', 2),
                b'n' => (b'\n', 2),
                b'0' => (0, 2),
                b'\\' => (b'\\', 2),
                b'x' => (u8::from_str_radix(&s[i + 2..i + 4], 16).expect("\\xHH escape"), 4),
                other => panic!("unknown escape \\{}", other as char),
            };
            out.push(byte);
            i += len;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    out
}

pub fn parse_script(text: &str) -> Vec<Case> {
    let mut cases: Vec<Case> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let rest = |prefix: &str| line[prefix.len()..].strip_prefix(' ').unwrap_or(&line[prefix.len()..]);
        let expect = if line.starts_with('#') || line.is_empty() {
            continue;
        } else if line.starts_with(">>") {
            cases.push(Case {
                line: line_no,
                request: unescape(rest(">>")),
                expect: Vec::new(),
            });
            continue;
        } else if line.starts_with('>') {
            cases.push(Case {
                line: line_no,
                request: rest(">").as_bytes().to_vec(),
                expect: Vec::new(),
            });
            continue;
        } else if line == "<CLOSED>" {
            Expect::Closed
        } else if line.starts_with("<~") {
            Expect::Prefix(rest("<~").as_bytes().to_vec())
        } else if line.starts_with('<') {
            Expect::Exact(rest("<").as_bytes().to_vec())
        } else {
            panic!("line {line_no}: unrecognised script line {line:?}");
        };
        cases
            .last_mut()
            .unwrap_or_else(|| panic!("line {line_no}: expectation before any request"))
            .expect
            .push(expect);
    }
    cases
}

fn show(b: &[u8]) -> String {
    String::from_utf8_lossy(b).escape_debug().to_string()
}

/// Runs the script against one daemon, stopping at the first failure.
pub fn run_script(cases: &[Case], addr: &Address) -> Vec<String> {
    let mut failures = Vec::new();
    let mut client = Client::connect(addr).expect("connect");
    for case in cases {
        if let Err(e) = client.send(&case.request) {
            failures.push(format!("line {}: send failed: {e}", case.line));
            return failures;
        }
        for expect in &case.expect {
            match expect {
                Expect::Closed => {
                    if !client.is_closed() {
                        failures.push(format!("line {}: connection still open", case.line));
                    }
                    client = Client::connect(addr).expect("reconnect");
                }
                Expect::Exact(want) | Expect::Prefix(want) => {
                    let got = match client.raw_line() {
                        Ok(got) => got,
                        Err(e) => {
                            failures.push(format!("line {}: read failed: {e}", case.line));
                            return failures;
                        }
                    };
                    let Some(body) = got.strip_suffix(b"\r\n") else {
                        failures.push(format!("line {}: unterminated line {:?}", case.line, show(&got)));
                        return failures;
                    };
                    let ok = match expect {
                        Expect::Exact(_) => body == &want[..],
                        _ => body.starts_with(want),
                    };
                    if !ok {
                        failures.push(format!(
                            "line {}: {:?}: expected {:?}, got {:?}",
                            case.line,
                            show(&case.request),
                            show(want),
                            show(body)
                        ));
                        // Later lines would only be out of step.
                        return failures;
                    }
                }
            }
        }
    }
    // Nothing unexpected may be left in the stream.
    match client.request("PING") {
        Ok(Response::Pong) => {}
        other => failures.push(format!("trailing output before final PING: {other:?}")),
    }
    failures
}
