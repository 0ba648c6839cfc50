use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use sqcached_bench::{embedded, run, Endpoint, Experiment, WorkloadSpec};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    KvRead,
    KvWrite,
    Expiry,
}

#[derive(Debug, Parser)]
#[command(name = "bench", about = "Benchmark harness for sqcached")]
struct Args {
    #[arg(value_enum)]
    experiment: Command,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8124)]
    port: u16,
    /// Connect over this local socket instead of TCP.
    #[arg(long)]
    unix: Option<PathBuf>,
    /// Start a daemon inside this process instead of connecting to one.
    #[arg(long)]
    embedded: bool,
    #[arg(long, default_value_t = 100_000)]
    records: u64,
    #[arg(long, default_value_t = 30_000)]
    pages: u64,
    #[arg(long, default_value_t = 1000)]
    users: u64,
    #[arg(long, default_value_t = 512)]
    mean_value_bytes: u64,
    #[arg(long, default_value_t = 1)]
    clients: usize,
    /// Operations for kv experiments; repetitions per scenario for expiry.
    #[arg(long)]
    ops: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Build the kv table without its key index.
    #[arg(long)]
    no_index: bool,
    #[arg(long, conflicts_with = "table")]
    json: bool,
    #[arg(long)]
    table: bool,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let experiment = match args.experiment {
        Command::KvRead => Experiment::KvRead,
        Command::KvWrite => Experiment::KvWrite,
        Command::Expiry => Experiment::Expiry,
    };
    let defaults = WorkloadSpec::standard(experiment);
    let spec = WorkloadSpec {
        experiment,
        records: args.records,
        pages: args.pages,
        users: args.users,
        mean_value_bytes: args.mean_value_bytes,
        clients: args.clients,
        ops: args.ops.unwrap_or(defaults.ops),
        seed: args.seed,
        index: !args.no_index,
    };
    let (server, endpoint) = if args.embedded {
        let (server, endpoint) = embedded(args.unix.clone())?;
        (Some(server), endpoint)
    } else {
        let endpoint = match &args.unix {
            Some(path) => Endpoint::Unix(path.clone()),
            None => Endpoint::Tcp(format!("{}:{}", args.host, args.port)),
        };
        (None, endpoint)
    };
    let report = run(&spec, &endpoint);
    if let Some(server) = server {
        server.stop()?;
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    if !report.valid {
        std::process::exit(1);
    }
    Ok(())
}
