//! The experiments.

use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqcached_core::Value;

use crate::client::{ClientError, Connection, Endpoint};
use crate::fixture::{cache_fixture, kv_fixture, rows_in_group, Experiment, Fixture, ValueSizes, WorkloadSpec};
use crate::report::{BenchReport, OrderingCheck, Scenario, SizeBucket};
use crate::stats::{median, percentile, Latency};

/// Each expiry granularity must be at least this many times slower than the finer one.
pub const REQUIRED_FACTOR: f64 = 3.0;

/// A key-value store the read/write experiments can drive. Only the
/// daemon's SQL interface is implemented; another store plugs in here.
pub trait KvTarget: Send {
    /// Length of the value under `key`, or `None` when absent.
    fn get(&mut self, key: &str) -> Result<Option<usize>, ClientError>;
    /// Overwrites an existing key; false when absent.
    fn set(&mut self, key: &str, value: &str, time: u64) -> Result<bool, ClientError>;
}

impl KvTarget for Connection {
    fn get(&mut self, key: &str) -> Result<Option<usize>, ClientError> {
        let rows = self.rows(&format!("SELECT value FROM kv WHERE key = '{key}'"))?;
        match rows.as_slice() {
            [] => Ok(None),
            [row] => match row.as_slice() {
                [Value::Text(v)] => Ok(Some(v.len())),
                other => Err(ClientError::Unexpected(format!("row {other:?}"))),
            },
            _ => Err(ClientError::Unexpected(format!("{} rows for {key}", rows.len()))),
        }
    }

    fn set(&mut self, key: &str, value: &str, time: u64) -> Result<bool, ClientError> {
        let n = self.done(&format!("UPDATE kv SET value = '{value}', time = {time} WHERE key = '{key}'"))?;
        match n {
            0 | 1 => Ok(n == 1),
            n => Err(ClientError::Unexpected(format!("{n} rows updated for {key}"))),
        }
    }
}

pub fn run(spec: &WorkloadSpec, endpoint: &Endpoint) -> BenchReport {
    match spec.experiment {
        Experiment::KvRead | Experiment::KvWrite => run_kv(spec, endpoint),
        Experiment::Expiry => run_expiry(spec, endpoint),
    }
}

struct ClientResult {
    /// (latency in microseconds, key index) per operation.
    samples: Vec<(f64, u64)>,
    misses: u64,
    error: Option<ClientError>,
}

fn kv_client(spec: &WorkloadSpec, endpoint: &Endpoint, client: usize, ops: u64, sizes: &[usize]) -> ClientResult {
    let mut result = ClientResult {
        samples: Vec::with_capacity(ops as usize),
        misses: 0,
        error: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(client as u64 + 1);
    let value_sizes = ValueSizes::new(spec.mean_value_bytes);
    let mut value = String::new();
    let mut conn = match Connection::connect(endpoint) {
        Ok(c) => c,
        Err(e) => {
            result.error = Some(e);
            return result;
        }
    };
    for op in 0..ops {
        let r = rng.gen_range(0..spec.records);
        let key = format!("k{r}");
        if spec.experiment == Experiment::KvWrite {
            value.clear();
            value.extend((0..value_sizes.sample(&mut rng)).map(|_| 'w'));
        }
        let start = Instant::now();
        let outcome = match spec.experiment {
            Experiment::KvWrite => conn.set(&key, &value, op).map(|hit| hit.then_some(value.len())),
            _ => conn.get(&key),
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e6;
        match outcome {
            Ok(Some(len)) if spec.experiment == Experiment::KvRead && len != sizes[r as usize] => {
                result.error = Some(ClientError::Unexpected(format!(
                    "{key} returned {len} bytes, fixture has {}",
                    sizes[r as usize]
                )));
                return result;
            }
            Ok(Some(_)) => result.samples.push((elapsed, r)),
            Ok(None) => {
                result.misses += 1;
                result.samples.push((elapsed, r));
            }
            Err(e) => {
                result.error = Some(e);
                return result;
            }
        }
    }
    result
}

fn size_buckets(sizes: &[usize], samples: &[(f64, u64)]) -> Vec<SizeBucket> {
    let mut sorted = sizes.iter().map(|&s| s as f64).collect::<Vec<_>>();
    sorted.sort_by(f64::total_cmp);
    let bounds: Vec<usize> = (1..=10)
        .map(|d| percentile(&sorted, d as f64 * 10.0).unwrap_or(0.0) as usize)
        .collect();
    let mut per_bucket: Vec<Vec<f64>> = vec![Vec::new(); 10];
    for &(us, key) in samples {
        let size = sizes[key as usize];
        let d = bounds.iter().position(|&b| size <= b).unwrap_or(9);
        per_bucket[d].push(us);
    }
    per_bucket
        .iter()
        .enumerate()
        .map(|(d, lat)| SizeBucket {
            decile: d + 1,
            min_bytes: if d == 0 { 0 } else { bounds[d - 1] + 1 },
            max_bytes: bounds[d],
            latency: Latency::from_samples(lat),
        })
        .collect()
}

fn run_kv(spec: &WorkloadSpec, endpoint: &Endpoint) -> BenchReport {
    let mut report = BenchReport::new(spec, endpoint.to_string());
    let fixture = kv_fixture(spec);
    if let Err(e) = Connection::connect(endpoint).and_then(|mut c| fixture.load(&mut c)) {
        report.invalidate(format!("loading fixture: {e}"));
        return report;
    }
    if spec.records == 0 {
        report.notes.push("zero fixture: no keys to read or write".into());
        return report;
    }
    let clients = spec.clients.max(1);
    let sizes = &fixture.value_sizes;
    let start = Instant::now();
    let results: Vec<ClientResult> = thread::scope(|scope| {
        let handles: Vec<_> = (0..clients)
            .map(|c| {
                let ops = spec.ops / clients as u64 + u64::from((c as u64) < spec.ops % clients as u64);
                scope.spawn(move || kv_client(spec, endpoint, c, ops, sizes))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("client thread")).collect()
    });
    report.elapsed_s = start.elapsed().as_secs_f64();
    let samples: Vec<(f64, u64)> = results.iter().flat_map(|r| r.samples.iter().copied()).collect();
    report.operations = samples.len() as u64;
    report.misses = results.iter().map(|r| r.misses).sum();
    report.ops_per_sec = if report.elapsed_s > 0.0 { report.operations as f64 / report.elapsed_s } else { 0.0 };
    report.latency = Latency::from_samples(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
    report.buckets = size_buckets(sizes, &samples);
    if let Some(e) = results.into_iter().find_map(|r| r.error) {
        report.invalidate(e);
    }
    report
}

struct ExpiryCase {
    name: &'static str,
    template: &'static str,
}

const EXPIRY_CASES: [ExpiryCase; 3] = [
    ExpiryCase {
        name: "page",
        template: "DELETE FROM cache WHERE page_id = <p>",
    },
    ExpiryCase {
        name: "user",
        template: "DELETE FROM cache WHERE user_id = <u>",
    },
    ExpiryCase {
        name: "flush",
        template: "FLUSH cache",
    },
];

/// One timed scenario on a freshly loaded fixture, checked before it counts.
fn timed_expiry(conn: &mut Connection, fixture: &Fixture, sql: &str, expected: u64) -> Result<f64, ClientError> {
    fixture.load(conn)?;
    let start = Instant::now();
    let removed = conn.done(sql)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    if removed != expected {
        return Err(ClientError::Unexpected(format!("{sql} removed {removed} rows, expected {expected}")));
    }
    Ok(elapsed)
}

fn run_expiry(spec: &WorkloadSpec, endpoint: &Endpoint) -> BenchReport {
    let mut report = BenchReport::new(spec, endpoint.to_string());
    let repetitions = spec.ops as usize;
    let fixture = cache_fixture(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scenarios: Vec<Scenario> = EXPIRY_CASES
        .iter()
        .map(|c| Scenario {
            name: c.name.into(),
            statement: c.template.into(),
            repetitions: 0,
            affected: Vec::new(),
            samples_us: Vec::new(),
            median_us: 0.0,
            min_us: 0.0,
            max_us: 0.0,
        })
        .collect();
    let mut conn = match Connection::connect(endpoint) {
        Ok(c) => c,
        Err(e) => {
            report.invalidate(e);
            return report;
        }
    };
    let total = Instant::now();
    'reps: for _ in 0..repetitions {
        let page = rng.gen_range(0..spec.pages.max(1));
        let user = rng.gen_range(0..spec.users.max(1));
        // Scenarios alternate so slow drift hits all three alike.
        for (case, scenario) in EXPIRY_CASES.iter().zip(scenarios.iter_mut()) {
            let (sql, expected) = match case.name {
                "page" => (format!("DELETE FROM cache WHERE page_id = {page}"), rows_in_group(spec.records, spec.pages, page)),
                "user" => (format!("DELETE FROM cache WHERE user_id = {user}"), rows_in_group(spec.records, spec.users, user)),
                _ => ("FLUSH cache".to_string(), spec.records),
            };
            match timed_expiry(&mut conn, &fixture, &sql, expected) {
                Ok(us) => {
                    scenario.samples_us.push(us);
                    scenario.affected.push(expected);
                    scenario.repetitions += 1;
                }
                Err(e) => {
                    report.invalidate(e);
                    break 'reps;
                }
            }
        }
    }
    report.elapsed_s = total.elapsed().as_secs_f64();
    for sc in &mut scenarios {
        sc.median_us = median(&sc.samples_us).unwrap_or(0.0);
        sc.min_us = sc.samples_us.iter().copied().fold(f64::INFINITY, f64::min);
        sc.max_us = sc.samples_us.iter().copied().fold(0.0, f64::max);
        if sc.samples_us.is_empty() {
            sc.min_us = 0.0;
        }
    }
    report.operations = scenarios.iter().map(|s| s.repetitions as u64).sum();
    let (page, user, flush) = (scenarios[0].median_us, scenarios[1].median_us, scenarios[2].median_us);
    let checked = report.valid && spec.records > 0 && repetitions > 0;
    if spec.records == 0 {
        report.notes.push("zero fixture: every scenario removes 0 rows; ordering not checked".into());
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    report.ordering = Some(OrderingCheck {
        checked,
        page_median_us: page,
        user_median_us: user,
        flush_median_us: flush,
        user_over_page: ratio(user, page),
        flush_over_user: ratio(flush, user),
        required_factor: REQUIRED_FACTOR,
        holds: checked && ratio(user, page) >= REQUIRED_FACTOR && ratio(flush, user) >= REQUIRED_FACTOR,
    });
    report.scenarios = scenarios;
    report
}
