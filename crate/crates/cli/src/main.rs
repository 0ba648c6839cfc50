use anyhow::Context;
use clap::Parser;
use sqcached::{Args, Server};
use sqcached_core::Engine;

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let level = if args.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let config = args.server_config()?;
    let engine = Engine::new(config.engine_config());
    let server = Server::bind(config, engine)?;
    let handle = server.shutdown_handle();
    ctrlc::set_handler(move || handle.shutdown()).context("installing signal handler")?;
    server.run().context("event loop failed")?;
    Ok(())
}
