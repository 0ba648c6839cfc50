//! The `sqcached` daemon: configuration and the event-driven server.

pub mod config;
pub mod server;

pub use config::{Args, ConfigError, ServerConfig};
pub use server::{spawn, RunningServer, Server, ServerError, ShutdownHandle};
