//! Benchmark results and their renderings.

use std::fmt::Write;

use serde::Serialize;

use crate::fixture::{Experiment, WorkloadSpec};
use crate::stats::Latency;

/// Latency of reads whose value size falls in one decile of the fixture.
#[derive(Debug, Clone, Serialize)]
pub struct SizeBucket {
    pub decile: usize,
    pub min_bytes: usize,
    pub max_bytes: usize,
    pub latency: Latency,
}

/// One forced-expiry scenario, timed on fresh fixtures.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub statement: String,
    pub repetitions: usize,
    /// Rows removed per repetition, checked against the fixture arithmetic.
    pub affected: Vec<u64>,
    pub samples_us: Vec<f64>,
    pub median_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub checked: bool,
    pub page_median_us: f64,
    pub user_median_us: f64,
    pub flush_median_us: f64,
    pub user_over_page: f64,
    pub flush_over_user: f64,
    pub required_factor: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub experiment: Experiment,
    pub spec: WorkloadSpec,
    pub endpoint: String,
    /// False when the run aborted; the fields hold what was measured so far.
    pub valid: bool,
    pub error: Option<String>,
    pub notes: Vec<String>,
    pub operations: u64,
    pub elapsed_s: f64,
    pub ops_per_sec: f64,
    pub latency: Latency,
    /// Reads that found no row, or writes that matched none.
    pub misses: u64,
    pub buckets: Vec<SizeBucket>,
    pub scenarios: Vec<Scenario>,
    pub ordering: Option<OrderingCheck>,
}

impl BenchReport {
    pub fn new(spec: &WorkloadSpec, endpoint: String) -> BenchReport {
        BenchReport {
            experiment: spec.experiment,
            spec: spec.clone(),
            endpoint,
            valid: true,
            error: None,
            notes: Vec::new(),
            operations: 0,
            elapsed_s: 0.0,
            ops_per_sec: 0.0,
            latency: Latency::default(),
            misses: 0,
            buckets: Vec::new(),
            scenarios: Vec::new(),
            ordering: None,
        }
    }

    pub fn invalidate(&mut self, error: impl ToString) {
        self.valid = false;
        self.error = Some(error.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let s = &self.spec;
        let _ = writeln!(
            out,
            "{:?} via {}: records={} pages={} users={} mean_value_bytes={} clients={} ops={} seed={} index={}",
            self.experiment, self.endpoint, s.records, s.pages, s.users, s.mean_value_bytes, s.clients, s.ops, s.seed, s.index
        );
        if !self.valid {
            let _ = writeln!(out, "INVALID: {}", self.error.as_deref().unwrap_or("unknown error"));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        if self.experiment == Experiment::Expiry {
            let _ = writeln!(out, "{:<8} {:>6} {:>12} {:>12} {:>12} {:>10}", "scenario", "reps", "median_us", "min_us", "max_us", "removed");
            for sc in &self.scenarios {
                let removed = match (sc.affected.iter().min(), sc.affected.iter().max()) {
                    (Some(lo), Some(hi)) if lo == hi => lo.to_string(),
                    (Some(lo), Some(hi)) => format!("{lo}-{hi}"),
                    _ => "-".into(),
                };
                let _ = writeln!(
                    out,
                    "{:<8} {:>6} {:>12.1} {:>12.1} {:>12.1} {:>10}",
                    sc.name, sc.repetitions, sc.median_us, sc.min_us, sc.max_us, removed
                );
            }
            if let Some(o) = &self.ordering {
                if o.checked {
                    let _ = writeln!(
                        out,
                        "ordering page < user < flush: user/page = {:.1}x, flush/user = {:.1}x (need {:.0}x): {}",
                        o.user_over_page,
                        o.flush_over_user,
                        o.required_factor,
                        if o.holds { "holds" } else { "VIOLATED" }
                    );
                } else {
                    let _ = writeln!(out, "ordering not checked");
                }
            }
        } else {
            let l = &self.latency;
            let _ = writeln!(
                out,
                "{} ops in {:.3} s: {:.0} ops/s, misses {}",
                self.operations, self.elapsed_s, self.ops_per_sec, self.misses
            );
            let _ = writeln!(
                out,
                "latency us: mean {:.1} p50 {:.1} p95 {:.1} p99 {:.1} max {:.1}",
                l.mean_us, l.p50_us, l.p95_us, l.p99_us, l.max_us
            );
            if !self.buckets.is_empty() {
                let _ = writeln!(out, "{:<7} {:>10} {:>8} {:>10} {:>10} {:>10}", "decile", "bytes", "ops", "p50_us", "p95_us", "p99_us");
                for b in &self.buckets {
                    let _ = writeln!(
                        out,
                        "{:<7} {:>10} {:>8} {:>10.1} {:>10.1} {:>10.1}",
                        b.decile,
                        format!("{}-{}", b.min_bytes, b.max_bytes),
                        b.latency.count,
                        b.latency.p50_us,
                        b.latency.p95_us,
                        b.latency.p99_us
                    );
                }
            }
        }
        out
    }
}
