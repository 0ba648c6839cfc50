//! Load generator for `sqcached`: key-value read/write throughput and the
//! cost of forced expiry at three granularities.

pub mod client;
pub mod fixture;
pub mod report;
pub mod run;
pub mod stats;

use std::path::PathBuf;

pub use client::{ClientError, Connection, Endpoint};
pub use fixture::{Experiment, WorkloadSpec};
pub use report::BenchReport;
pub use run::run;

use sqcached::{RunningServer, ServerConfig, ServerError};
use sqcached_core::Engine;

/// Starts a daemon on this process's own thread, on an ephemeral TCP port
/// or on `unix` when given.
pub fn embedded(unix: Option<PathBuf>) -> Result<(RunningServer, Endpoint), ServerError> {
    let config = ServerConfig {
        tcp: if unix.is_some() { None } else { Some("127.0.0.1:0".parse().expect("valid address")) },
        unix,
        ..ServerConfig::default()
    };
    let engine = Engine::new(config.engine_config());
    let server = sqcached::spawn(config, engine)?;
    let endpoint = match (&server.unix_path, server.tcp_addr) {
        (Some(path), _) => Endpoint::Unix(path.clone()),
        (None, Some(addr)) => Endpoint::Tcp(addr.to_string()),
        (None, None) => unreachable!("a listener is always enabled"),
    };
    Ok((server, endpoint))
}
