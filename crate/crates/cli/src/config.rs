use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use sqcached_core::expiry::DEFAULT_OPS_PER_SWEEP;
use sqcached_core::EngineConfig;

pub const DEFAULT_TCP: &str = "127.0.0.1:8124";
pub const DEFAULT_MAX_LINE: usize = 1 << 20;
pub const MIN_MAX_LINE: usize = 1 << 10;
pub const DEFAULT_MAX_ROWS: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("no listener enabled: pass --unix PATH or drop --no-tcp")]
    NoListener,
    #[error("--max-line must be at least {MIN_MAX_LINE} bytes, got {0}")]
    MaxLineTooSmall(usize),
    #[error("--ops-per-sweep must be at least 1")]
    ZeroOps,
    #[error("cannot resolve {0}: {1}")]
    Resolve(String, String),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub tcp: Option<SocketAddr>,
    pub unix: Option<PathBuf>,
    pub max_line_bytes: usize,
    pub max_response_rows: usize,
    pub ops_per_sweep: u64,
    pub idle_timeout: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            tcp: Some(DEFAULT_TCP.parse().expect("valid default address")),
            unix: None,
            max_line_bytes: DEFAULT_MAX_LINE,
            max_response_rows: DEFAULT_MAX_ROWS,
            ops_per_sweep: DEFAULT_OPS_PER_SWEEP,
            idle_timeout: None,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tcp.is_none() && self.unix.is_none() {
            return Err(ConfigError::NoListener);
        }
        if self.max_line_bytes < MIN_MAX_LINE {
            return Err(ConfigError::MaxLineTooSmall(self.max_line_bytes));
        }
        if self.ops_per_sweep == 0 {
            return Err(ConfigError::ZeroOps);
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            max_response_rows: self.max_response_rows,
            default_ops_per_sweep: self.ops_per_sweep,
            ..EngineConfig::default()
        }
    }
}

/// Command-line flags; each has a `SQCACHED_` environment fallback.
#[derive(Debug, Parser)]
#[command(name = "sqcached", version, about = "Memory-only SQL cache daemon")]
pub struct Args {
    /// TCP listen address.
    #[arg(long, env = "SQCACHED_TCP", value_name = "HOST:PORT", default_value = DEFAULT_TCP)]
    pub tcp: String,
    /// Disable the TCP listener.
    #[arg(long, env = "SQCACHED_NO_TCP")]
    pub no_tcp: bool,
    /// Local socket path.
    #[arg(long, env = "SQCACHED_UNIX", value_name = "PATH")]
    pub unix: Option<PathBuf>,
    /// Longest accepted request line, in bytes.
    #[arg(long, env = "SQCACHED_MAX_LINE", value_name = "BYTES", default_value_t = DEFAULT_MAX_LINE)]
    pub max_line: usize,
    /// Largest SELECT result, in rows.
    #[arg(long, env = "SQCACHED_MAX_ROWS", value_name = "N", default_value_t = DEFAULT_MAX_ROWS)]
    pub max_rows: usize,
    /// Writes between automatic sweeps for new tables.
    #[arg(long, env = "SQCACHED_OPS_PER_SWEEP", value_name = "K", default_value_t = DEFAULT_OPS_PER_SWEEP)]
    pub ops_per_sweep: u64,
    /// Close connections idle this many seconds.
    #[arg(long, env = "SQCACHED_IDLE_TIMEOUT", value_name = "SECONDS")]
    pub idle_timeout: Option<u64>,
    /// Log every connection and request.
    #[arg(short, long, env = "SQCACHED_VERBOSE")]
    pub verbose: bool,
}

impl Args {
    pub fn server_config(&self) -> Result<ServerConfig, ConfigError> {
        let tcp = if self.no_tcp {
            None
        } else {
            let resolve = |e: String| ConfigError::Resolve(self.tcp.clone(), e);
            let addr = self
                .tcp
                .to_socket_addrs()
                .map_err(|e| resolve(e.to_string()))?
                .next()
                .ok_or_else(|| resolve("no addresses".into()))?;
            Some(addr)
        };
        let config = ServerConfig {
            tcp,
            unix: self.unix.clone(),
            max_line_bytes: self.max_line,
            max_response_rows: self.max_rows,
            ops_per_sweep: self.ops_per_sweep,
            idle_timeout: self.idle_timeout.filter(|&s| s > 0).map(Duration::from_secs),
        };
        config.validate()?;
        Ok(config)
    }
}
