//! Readiness-driven daemon loop.
//!
//! One thread owns the poller, every connection and the engine. Sockets are
//! read and written as they become ready, and complete request lines are
//! executed one at a time, so statements never overlap.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr};
use std::os::unix::fs::FileTypeExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use mio::event::Event;
use mio::net::{TcpListener, TcpStream, UnixListener, UnixStream};
use mio::{Events, Interest, Poll, Registry, Token, Waker};
use slab::Slab;
use sqcached_core::protocol::{decode_request, encode_response};
use sqcached_core::{Engine, Request, Response};

use crate::config::{ConfigError, ServerConfig};

const TCP_LISTENER: Token = Token(usize::MAX - 1);
const UNIX_LISTENER: Token = Token(usize::MAX - 2);
const WAKER: Token = Token(usize::MAX - 3);

const READ_CHUNK: usize = 64 * 1024;
/// Pending output above which a connection's input is left unread.
const OUTPUT_HIGH_WATER: usize = 4 << 20;
/// Input discarded after a fatal protocol error before giving up on the peer.
const DRAIN_LIMIT: usize = 64 << 20;
const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {what}: {source}")]
    Bind { what: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Stops a running server from any thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    stop: Arc<AtomicBool>,
    waker: Arc<Waker>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Err(e) = self.waker.wake() {
            warn!("waking server for shutdown: {e}");
        }
    }
}

enum Stream {
    Tcp(TcpStream),
    Unix(UnixStream),
}

impl Stream {
    fn source(&mut self) -> &mut dyn mio::event::Source {
        match self {
            Stream::Tcp(s) => s,
            Stream::Unix(s) => s,
        }
    }

    fn shutdown_write(&self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.shutdown(Shutdown::Write),
            Stream::Unix(s) => s.shutdown(Shutdown::Write),
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Open,
    /// Flush pending output, then half-close and discard input.
    Closing,
    Draining,
    Closed,
}

struct Connection {
    stream: Stream,
    peer: String,
    input: Vec<u8>,
    /// Bytes of `input` already searched for a newline.
    scanned: usize,
    output: Vec<u8>,
    written: usize,
    /// Requests answered so far; responses go out in this order.
    seq: u64,
    state: State,
    readable: bool,
    eof: bool,
    drained: usize,
    last_active: Instant,
}

impl Connection {
    fn new(stream: Stream, peer: String) -> Self {
        Connection {
            stream,
            peer,
            input: Vec::new(),
            scanned: 0,
            output: Vec::new(),
            written: 0,
            seq: 0,
            state: State::Open,
            readable: true,
            eof: false,
            drained: 0,
            last_active: Instant::now(),
        }
    }

    fn pending(&self) -> usize {
        self.output.len() - self.written
    }

    /// Writes queued output until done or the socket would block.
    fn flush(&mut self) -> io::Result<()> {
        while self.written < self.output.len() {
            match self.stream.write(&self.output[self.written..]) {
                Ok(0) => return Err(ErrorKind::WriteZero.into()),
                Ok(n) => self.written += n,
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        if self.written == self.output.len() {
            self.output.clear();
            self.written = 0;
        }
        Ok(())
    }

    /// Reads one chunk; returns whether any bytes arrived.
    fn read_chunk(&mut self) -> io::Result<bool> {
        let start = self.input.len();
        self.input.resize(start + READ_CHUNK, 0);
        let result = self.stream.read(&mut self.input[start..]);
        self.input.truncate(start + *result.as_ref().unwrap_or(&0));
        match result {
            Ok(0) => {
                self.eof = true;
                Ok(false)
            }
            Ok(_) => {
                self.last_active = Instant::now();
                Ok(true)
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                self.readable = false;
                Ok(false)
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn discard_input(&mut self) -> io::Result<()> {
        let mut buf = [0u8; READ_CHUNK];
        loop {
            match self.stream.read(&mut buf) {
                Ok(0) => {
                    self.eof = true;
                    return Ok(());
                }
                Ok(n) => {
                    self.drained += n;
                    if self.drained > DRAIN_LIMIT {
                        return Err(io::Error::other("peer kept sending after a fatal error"));
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    self.readable = false;
                    return Ok(());
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
    }

    fn respond(&mut self, response: &Response) {
        encode_response(response, &mut self.output);
        self.seq += 1;
    }

    fn fatal(&mut self, engine: &mut Engine, message: &str) {
        let stats = engine.stats_mut();
        stats.requests += 1;
        stats.errors += 1;
        self.respond(&Response::Error {
            code: "PROTO".into(),
            message: message.into(),
        });
        self.input.clear();
        self.scanned = 0;
        self.state = State::Closing;
    }

    /// Executes buffered complete lines until output backs up.
    fn process(&mut self, engine: &mut Engine, max_line: usize) {
        let mut consumed = 0;
        while self.state == State::Open && self.pending() < OUTPUT_HIGH_WATER {
            let from = consumed.max(self.scanned);
            let Some(nl) = self.input[from..].iter().position(|&b| b == b'\n') else {
                self.scanned = self.input.len();
                if self.input.len() - consumed > max_line {
                    self.fatal(engine, "line too long");
                    return;
                }
                break;
            };
            let end = from + nl;
            let line = &self.input[consumed..end];
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            if line.len() > max_line {
                self.fatal(engine, "line too long");
                return;
            }
            if line.contains(&0) {
                self.fatal(engine, "NUL byte in request");
                return;
            }
            let response = match decode_request(line) {
                Ok(None) => None,
                Ok(Some(request)) => {
                    if log::log_enabled!(log::Level::Debug) {
                        debug!("{} #{}: {}", self.peer, self.seq, String::from_utf8_lossy(line));
                    }
                    let response = engine.handle(&request);
                    if matches!(request, Request::Admin(sqcached_core::Admin::Quit)) {
                        self.state = State::Closing;
                    }
                    Some(response)
                }
                Err(e) => {
                    let stats = engine.stats_mut();
                    stats.requests += 1;
                    stats.errors += 1;
                    Some(Response::error(&e))
                }
            };
            consumed = end + 1;
            self.scanned = consumed;
            if let Some(response) = response {
                self.respond(&response);
            }
        }
        if self.state == State::Open {
            self.input.drain(..consumed);
            self.scanned -= consumed;
        }
    }

    /// Advances the connection as far as readiness allows.
    fn service(&mut self, engine: &mut Engine, max_line: usize) -> io::Result<()> {
        loop {
            self.flush()?;
            match self.state {
                State::Open => {
                    let before = self.pending();
                    self.process(engine, max_line);
                    if self.state != State::Open || self.pending() != before {
                        continue;
                    }
                    if self.readable && !self.eof && self.pending() < OUTPUT_HIGH_WATER {
                        if self.read_chunk()? || self.eof {
                            continue;
                        }
                    }
                    if self.eof && self.pending() == 0 {
                        self.state = State::Closed;
                    }
                    return Ok(());
                }
                State::Closing => {
                    if self.pending() > 0 {
                        return Ok(());
                    }
                    // The peer may already be gone; nothing left to tell it.
                    let _ = self.stream.shutdown_write();
                    self.state = State::Draining;
                }
                State::Draining => {
                    if self.readable && !self.eof {
                        self.discard_input()?;
                    }
                    if self.eof {
                        self.state = State::Closed;
                    }
                    return Ok(());
                }
                State::Closed => return Ok(()),
            }
        }
    }
}

pub struct Server {
    poll: Poll,
    tcp: Option<TcpListener>,
    unix: Option<UnixListener>,
    unix_path: Option<PathBuf>,
    connections: Slab<Connection>,
    engine: Engine,
    config: ServerConfig,
    stop: Arc<AtomicBool>,
    waker: Arc<Waker>,
}

/// Removes a leftover socket file nobody is listening on.
fn clear_stale_socket(path: &Path) -> io::Result<()> {
    match std::fs::symlink_metadata(path) {
        Ok(meta) if meta.file_type().is_socket() => {
            if std::os::unix::net::UnixStream::connect(path).is_ok() {
                return Err(io::Error::new(ErrorKind::AddrInUse, "another server is listening"));
            }
            std::fs::remove_file(path)
        }
        Ok(_) => Err(io::Error::new(ErrorKind::AlreadyExists, "path exists and is not a socket")),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e),
    }
}

impl Server {
    pub fn bind(config: ServerConfig, engine: Engine) -> Result<Server, ServerError> {
        config.validate()?;
        let poll = Poll::new()?;
        let waker = Arc::new(Waker::new(poll.registry(), WAKER)?);
        let mut tcp = None;
        if let Some(addr) = config.tcp {
            let bind_err = |source| ServerError::Bind {
                what: addr.to_string(),
                source,
            };
            let mut listener = TcpListener::bind(addr).map_err(bind_err)?;
            poll.registry().register(&mut listener, TCP_LISTENER, Interest::READABLE)?;
            tcp = Some(listener);
        }
        let mut unix = None;
        if let Some(path) = &config.unix {
            let bind_err = |source| ServerError::Bind {
                what: path.display().to_string(),
                source,
            };
            clear_stale_socket(path).map_err(bind_err)?;
            let mut listener = UnixListener::bind(path).map_err(bind_err)?;
            poll.registry().register(&mut listener, UNIX_LISTENER, Interest::READABLE)?;
            unix = Some(listener);
        }
        if let Some(listener) = &tcp {
            info!("listening on tcp {}", listener.local_addr()?);
        }
        if let Some(path) = &config.unix {
            info!("listening on unix {}", path.display());
        }
        Ok(Server {
            poll,
            tcp,
            unix,
            unix_path: config.unix.clone(),
            connections: Slab::new(),
            engine,
            config,
            stop: Arc::new(AtomicBool::new(false)),
            waker,
        })
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp.as_ref().and_then(|l| l.local_addr().ok())
    }

    pub fn unix_path(&self) -> Option<&Path> {
        self.unix_path.as_deref()
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle {
            stop: self.stop.clone(),
            waker: self.waker.clone(),
        }
    }

    /// Serves until shut down, then returns the engine.
    pub fn run(mut self) -> io::Result<Engine> {
        let mut events = Events::with_capacity(1024);
        while !self.stop.load(Ordering::SeqCst) {
            let timeout = self.config.idle_timeout.map(|t| (t / 2).max(Duration::from_millis(10)));
            if let Err(e) = self.poll.poll(&mut events, timeout) {
                if e.kind() == ErrorKind::Interrupted {
                    continue;
                }
                return Err(e);
            }
            for event in events.iter() {
                match event.token() {
                    WAKER => {}
                    TCP_LISTENER => self.accept_tcp(),
                    UNIX_LISTENER => self.accept_unix(),
                    token => self.connection_event(token, event),
                }
            }
            self.reap_idle();
        }
        self.finish()
    }

    fn accept_tcp(&mut self) {
        loop {
            let Some(listener) = &self.tcp else { return };
            match listener.accept() {
                Ok((stream, peer)) => {
                    if let Err(e) = stream.set_nodelay(true) {
                        debug!("set_nodelay for {peer}: {e}");
                    }
                    self.add(Stream::Tcp(stream), peer.to_string());
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return,
                Err(e) => {
                    warn!("tcp accept: {e}");
                    return;
                }
            }
        }
    }

    fn accept_unix(&mut self) {
        loop {
            let Some(listener) = &self.unix else { return };
            match listener.accept() {
                Ok((stream, _)) => {
                    let peer = format!("unix#{}", self.engine.stats().connections_accepted + 1);
                    self.add(Stream::Unix(stream), peer);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return,
                Err(e) => {
                    warn!("unix accept: {e}");
                    return;
                }
            }
        }
    }

    fn add(&mut self, stream: Stream, peer: String) {
        let entry = self.connections.vacant_entry();
        let token = Token(entry.key());
        let mut conn = Connection::new(stream, peer);
        let interest = Interest::READABLE | Interest::WRITABLE;
        if let Err(e) = self.poll.registry().register(conn.stream.source(), token, interest) {
            warn!("registering {}: {e}", conn.peer);
            return;
        }
        info!("accepted {}", conn.peer);
        self.engine.stats_mut().connections_accepted += 1;
        entry.insert(conn);
    }

    fn connection_event(&mut self, token: Token, event: &Event) {
        let Some(conn) = self.connections.get_mut(token.0) else { return };
        if event.is_readable() || event.is_read_closed() || event.is_error() {
            conn.readable = true;
        }
        let result = conn.service(&mut self.engine, self.config.max_line_bytes);
        let closed = conn.state == State::Closed;
        match result {
            Err(e) => {
                debug!("{}: {e}", conn.peer);
                self.close(token);
            }
            Ok(()) if closed => self.close(token),
            Ok(()) => {}
        }
    }

    fn close(&mut self, token: Token) {
        let mut conn = self.connections.remove(token.0);
        if let Err(e) = self.poll.registry().deregister(conn.stream.source()) {
            debug!("deregistering {}: {e}", conn.peer);
        }
        info!("closed {} after {} requests", conn.peer, conn.seq);
    }

    fn reap_idle(&mut self) {
        let Some(limit) = self.config.idle_timeout else { return };
        let idle: Vec<usize> = self
            .connections
            .iter()
            .filter(|(_, c)| c.last_active.elapsed() >= limit)
            .map(|(k, _)| k)
            .collect();
        for key in idle {
            debug!("{} idle", self.connections[key].peer);
            self.close(Token(key));
        }
    }

    /// Stops accepting, flushes queued responses and releases the listeners.
    fn finish(mut self) -> io::Result<Engine> {
        info!("shutting down");
        let registry: &Registry = self.poll.registry();
        if let Some(mut l) = self.tcp.take() {
            registry.deregister(&mut l)?;
        }
        if let Some(mut l) = self.unix.take() {
            registry.deregister(&mut l)?;
        }
        if let Some(path) = &self.unix_path {
            if let Err(e) = std::fs::remove_file(path) {
                warn!("removing {}: {e}", path.display());
            }
        }
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        let mut events = Events::with_capacity(1024);
        loop {
            let busy: Vec<usize> = self
                .connections
                .iter_mut()
                .filter_map(|(k, c)| match c.flush() {
                    Ok(()) if c.pending() > 0 => Some(k),
                    _ => None,
                })
                .collect();
            let now = Instant::now();
            if busy.is_empty() || now >= deadline {
                break;
            }
            self.poll.poll(&mut events, Some(deadline - now))?;
        }
        let keys: Vec<usize> = self.connections.iter().map(|(k, _)| k).collect();
        for key in keys {
            self.close(Token(key));
        }
        Ok(self.engine)
    }
}

/// A server running on its own thread.
pub struct RunningServer {
    pub tcp_addr: Option<SocketAddr>,
    pub unix_path: Option<PathBuf>,
    handle: ShutdownHandle,
    thread: JoinHandle<io::Result<Engine>>,
}

impl RunningServer {
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    /// Shuts the server down and returns its engine.
    pub fn stop(self) -> io::Result<Engine> {
        self.handle.shutdown();
        self.thread
            .join()
            .unwrap_or_else(|_| Err(io::Error::other("server thread panicked")))
    }
}

pub fn spawn(config: ServerConfig, engine: Engine) -> Result<RunningServer, ServerError> {
    let server = Server::bind(config, engine)?;
    let tcp_addr = server.tcp_addr();
    let unix_path = server.unix_path().map(Path::to_path_buf);
    let handle = server.shutdown_handle();
    let thread = std::thread::Builder::new()
        .name("sqcached".into())
        .spawn(move || server.run())?;
    Ok(RunningServer {
        tcp_addr,
        unix_path,
        handle,
        thread,
    })
}
