//! Seeded benchmark data sets, produced as batched SQL statements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use crate::client::{ClientError, Connection};

/// Target size of one batched INSERT line, well under the daemon's line cap.
pub const BATCH_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    KvRead,
    KvWrite,
    Expiry,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadSpec {
    pub experiment: Experiment,
    pub records: u64,
    pub pages: u64,
    pub users: u64,
    pub mean_value_bytes: u64,
    pub clients: usize,
    /// Total operations for kv experiments; repetitions per scenario for expiry.
    pub ops: u64,
    pub seed: u64,
    /// Whether the kv table gets its key index.
    pub index: bool,
}

impl WorkloadSpec {
    /// 100,000 rows over 30,000 pages and 1,000 users, 512-byte mean values.
    pub fn standard(experiment: Experiment) -> WorkloadSpec {
        WorkloadSpec {
            experiment,
            records: 100_000,
            pages: 30_000,
            users: 1000,
            mean_value_bytes: 512,
            clients: 1,
            ops: if experiment == Experiment::Expiry { 30 } else { 10_000 },
            seed: 1,
            index: true,
        }
    }
}

/// Rows `i < records` with `i % modulus == id`, the round-robin assignment.
pub fn rows_in_group(records: u64, modulus: u64, id: u64) -> u64 {
    if modulus == 0 || id >= modulus || id >= records {
        return 0;
    }
    (records - 1 - id) / modulus + 1
}

/// Value sizes (bytes) drawn geometric with the given mean.
pub struct ValueSizes {
    dist: Geometric,
}

impl ValueSizes {
    pub fn new(mean: u64) -> ValueSizes {
        // Failures before the first success have mean (1 - p) / p.
        let p = 1.0 / (mean as f64 + 1.0);
        ValueSizes {
            dist: Geometric::new(p).expect("0 < p <= 1"),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng) as usize
    }
}

fn random_text(rng: &mut impl Rng, len: usize, out: &mut String) {
    out.extend((0..len).map(|_| char::from(rng.gen_range(b'a'..=b'z'))));
}

/// A data set ready to be loaded into a daemon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub table: &'static str,
    /// Statements that (re)create the empty table and its indexes.
    pub schema: Vec<String>,
    pub inserts: Vec<String>,
    /// Size of the value of row `i`.
    pub value_sizes: Vec<usize>,
}

struct Batcher {
    prefix: String,
    current: String,
    out: Vec<String>,
}

impl Batcher {
    fn new(table: &str) -> Batcher {
        let prefix = format!("INSERT INTO {table} VALUES ");
        Batcher {
            current: prefix.clone(),
            prefix,
            out: Vec::new(),
        }
    }

    fn push(&mut self, row: &str) {
        if self.current.len() > self.prefix.len() {
            if self.current.len() + row.len() > BATCH_BYTES {
                self.out.push(std::mem::replace(&mut self.current, self.prefix.clone()));
            } else {
                self.current.push_str(", ");
            }
        }
        self.current.push_str(row);
    }

    fn finish(mut self) -> Vec<String> {
        if self.current.len() > self.prefix.len() {
            self.out.push(self.current);
        }
        self.out
    }
}

/// `kv(key TEXT, value TEXT, time INTEGER)` with keys `k<i>`.
pub fn kv_fixture(spec: &WorkloadSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = ValueSizes::new(spec.mean_value_bytes);
    let mut schema = vec!["CREATE TABLE kv (key TEXT, value TEXT, time INTEGER)".to_string()];
    if spec.index {
        schema.push("CREATE INDEX kv_key ON kv (key)".to_string());
    }
    let mut batch = Batcher::new("kv");
    let mut value_sizes = Vec::with_capacity(spec.records as usize);
    let mut row = String::new();
    for i in 0..spec.records {
        let size = sizes.sample(&mut rng);
        row.clear();
        row.push_str(&format!("('k{i}', '"));
        random_text(&mut rng, size, &mut row);
        row.push_str(&format!("', {i})"));
        batch.push(&row);
        value_sizes.push(size);
    }
    Fixture {
        table: "kv",
        schema,
        inserts: batch.finish(),
        value_sizes,
    }
}

/// `cache(key, page_id, user_id, value, time)` with row `i` on page
/// `i mod pages` and user `i mod users`.
pub fn cache_fixture(spec: &WorkloadSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = ValueSizes::new(spec.mean_value_bytes);
    let schema = [
        "CREATE TABLE cache (key TEXT, page_id INTEGER, user_id INTEGER, value TEXT, time INTEGER)",
        "CREATE INDEX cache_key ON cache (key)",
        "CREATE INDEX cache_page ON cache (page_id)",
        "CREATE INDEX cache_user ON cache (user_id)",
    ]
    .map(String::from)
    .to_vec();
    let mut batch = Batcher::new("cache");
    let mut value_sizes = Vec::with_capacity(spec.records as usize);
    let mut row = String::new();
    for i in 0..spec.records {
        let size = sizes.sample(&mut rng);
        row.clear();
        row.push_str(&format!("('k{i}', {}, {}, '", i % spec.pages.max(1), i % spec.users.max(1)));
        random_text(&mut rng, size, &mut row);
        row.push_str(&format!("', {i})"));
        batch.push(&row);
        value_sizes.push(size);
    }
    Fixture {
        table: "cache",
        schema,
        inserts: batch.finish(),
        value_sizes,
    }
}

impl Fixture {
    /// Drops any previous copy of the table and loads a fresh one.
    pub fn load(&self, conn: &mut Connection) -> Result<(), ClientError> {
        match conn.done(&format!("DROP TABLE {}", self.table)) {
            Ok(_) | Err(ClientError::Server { .. }) => {}
            Err(e) => return Err(e),
        }
        for stmt in &self.schema {
            conn.done(stmt)?;
        }
        let mut loaded = 0;
        for stmt in &self.inserts {
            loaded += conn.done(stmt)?;
        }
        if loaded != self.value_sizes.len() as u64 {
            return Err(ClientError::Unexpected(format!(
                "loaded {loaded} rows, expected {}",
                self.value_sizes.len()
            )));
        }
        Ok(())
    }
}
