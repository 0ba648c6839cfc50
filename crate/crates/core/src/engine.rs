//! The engine: catalog, executor and expiry behind one request entry point.
//!
//! An `Engine` is not shared; whoever owns it executes one request at a
//! time, which is the daemon's serialization guarantee.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::btree::DEFAULT_ORDER;
use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::executor::{self, AccessPath, ExecOptions, ResultSet};
use crate::expiry::{self, ExpiryPolicy, Removed, DEFAULT_OPS_PER_SWEEP};
use crate::protocol::{Admin, PolicyClause, Request, Response};
use crate::sql::{self, Statement};
use crate::storage::Catalog;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// SELECT results with more rows are refused with `TOOBIG`.
    pub max_response_rows: usize,
    /// `ops_per_sweep` given to newly created tables.
    pub default_ops_per_sweep: u64,
    pub btree_order: usize,
    pub use_indexes: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_response_rows: 100_000,
            default_ops_per_sweep: DEFAULT_OPS_PER_SWEEP,
            btree_order: DEFAULT_ORDER,
            use_indexes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Rows(ResultSet),
    Affected(u64),
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub connections_accepted: u64,
    pub requests: u64,
    pub errors: u64,
    pub verbs: BTreeMap<&'static str, u64>,
    pub rows_returned: u64,
    pub rows_expired_age: u64,
    pub rows_expired_rows: u64,
    pub rows_flushed: u64,
    pub sweeps: u64,
}

impl Stats {
    fn expired(&mut self, removed: Removed) {
        self.rows_expired_age += removed.by_age as u64;
        self.rows_expired_rows += removed.by_rows as u64;
    }
}

pub struct Engine {
    catalog: Catalog,
    clock: Box<dyn Clock>,
    config: EngineConfig,
    stats: Stats,
    started: Instant,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new(EngineConfig::default())
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Self::with_clock(config, Box::new(SystemClock))
    }

    pub fn with_clock(config: EngineConfig, clock: Box<dyn Clock>) -> Self {
        Engine {
            catalog: Catalog::with_order(config.btree_order),
            clock,
            config,
            stats: Stats::default(),
            started: Instant::now(),
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut Stats {
        &mut self.stats
    }

    pub fn set_use_indexes(&mut self, on: bool) {
        self.config.use_indexes = on;
    }

    fn opts(&self) -> ExecOptions {
        ExecOptions {
            use_indexes: self.config.use_indexes,
        }
    }

    /// Parses and executes one SQL statement.
    pub fn execute(&mut self, sql: &[u8]) -> Result<Outcome> {
        let stmt = sql::parse(sql)?;
        *self.stats.verbs.entry(stmt.verb()).or_default() += 1;
        self.execute_statement(&stmt)
    }

    pub fn execute_statement(&mut self, stmt: &Statement) -> Result<Outcome> {
        let now = self.clock.now_ms();
        let opts = self.opts();
        match stmt {
            Statement::Select(sel) => {
                let rs = executor::execute_select(&self.catalog, sel, opts)?;
                if rs.rows.len() > self.config.max_response_rows {
                    return Err(Error::ResponseTooLarge {
                        rows: rs.rows.len(),
                        limit: self.config.max_response_rows,
                    });
                }
                self.stats.rows_returned += rs.rows.len() as u64;
                Ok(Outcome::Rows(rs))
            }
            Statement::Insert(ins) => {
                let table = self.catalog.table_mut(&ins.table)?;
                let n = executor::execute_insert(table, ins, now)?;
                let capped = expiry::enforce_row_cap(table);
                let swept = expiry::note_operation(table, now);
                self.stats.rows_expired_rows += capped as u64;
                self.after_write(swept);
                Ok(Outcome::Affected(n))
            }
            Statement::Update(up) => {
                let table = self.catalog.table_mut(&up.table)?;
                let n = executor::execute_update(table, up, opts)?;
                let swept = expiry::note_operation(table, now);
                self.after_write(swept);
                Ok(Outcome::Affected(n))
            }
            Statement::Delete(del) => {
                let table = self.catalog.table_mut(&del.table)?;
                let n = executor::execute_delete(table, del, opts)?;
                let swept = expiry::note_operation(table, now);
                self.after_write(swept);
                Ok(Outcome::Affected(n))
            }
            Statement::CreateTable(ct) => {
                executor::execute_ddl(&mut self.catalog, stmt)?;
                self.catalog.table_mut(&ct.name)?.policy = ExpiryPolicy::with_ops(self.config.default_ops_per_sweep);
                Ok(Outcome::Affected(0))
            }
            Statement::DropTable { .. } | Statement::CreateIndex(_) => {
                executor::execute_ddl(&mut self.catalog, stmt)?;
                Ok(Outcome::Affected(0))
            }
        }
    }

    fn after_write(&mut self, swept: Option<Removed>) {
        if let Some(removed) = swept {
            self.stats.sweeps += 1;
            self.stats.expired(removed);
        }
    }

    /// Access paths the planner picks for a SELECT, one per FROM table.
    pub fn explain(&self, sql: &[u8]) -> Result<Vec<AccessPath>> {
        match sql::parse(sql)? {
            Statement::Select(sel) => Ok(executor::plan_select(&self.catalog, &sel, self.opts())?.paths()),
            other => Err(Error::TypeMismatch(format!("cannot explain {}", other.verb()))),
        }
    }

    pub fn set_policy(&mut self, table: &str, clauses: &[PolicyClause]) -> Result<()> {
        let table = self.catalog.table_mut(table)?;
        let mut policy = table.policy;
        for clause in clauses {
            match *clause {
                PolicyClause::Age(s) => policy.max_age_ms = Some(s.saturating_mul(1000)),
                PolicyClause::Rows(n) => policy.max_rows = Some(n),
                PolicyClause::Ops(k) => policy.ops_per_sweep = k.max(1),
                PolicyClause::Off => {
                    policy.max_age_ms = None;
                    policy.max_rows = None;
                }
            }
        }
        table.policy = policy;
        Ok(())
    }

    /// Empties one table, or every table for `None`.
    pub fn flush(&mut self, table: Option<&str>) -> Result<u64> {
        let removed = match table {
            Some(name) => expiry::flush(self.catalog.table_mut(name)?),
            None => self.catalog.tables_mut().map(expiry::flush).sum(),
        } as u64;
        self.stats.rows_flushed += removed;
        Ok(removed)
    }

    pub fn sweep(&mut self, table: &str) -> Result<u64> {
        let now = self.clock.now_ms();
        let removed = expiry::sweep(self.catalog.table_mut(table)?, now);
        self.stats.sweeps += 1;
        self.stats.expired(removed);
        Ok(removed.total() as u64)
    }

    /// Statistics as `(name, value)` pairs in a stable order.
    pub fn stats_report(&self) -> Vec<(String, String)> {
        let s = &self.stats;
        let mut out: Vec<(String, String)> = vec![
            ("uptime_s".into(), self.started.elapsed().as_secs().to_string()),
            ("connections_accepted".into(), s.connections_accepted.to_string()),
            ("requests".into(), s.requests.to_string()),
            ("errors".into(), s.errors.to_string()),
        ];
        for verb in ["select", "insert", "update", "delete", "create_table", "drop_table", "create_index", "admin"] {
            let n = s.verbs.get(verb).copied().unwrap_or(0);
            out.push((format!("requests_{verb}"), n.to_string()));
        }
        out.extend([
            ("rows_returned".into(), s.rows_returned.to_string()),
            ("rows_expired_age".into(), s.rows_expired_age.to_string()),
            ("rows_expired_rows".into(), s.rows_expired_rows.to_string()),
            ("rows_flushed".into(), s.rows_flushed.to_string()),
            ("sweeps".into(), s.sweeps.to_string()),
            ("tables".into(), self.catalog.len().to_string()),
            ("rows".into(), self.catalog.tables().map(|t| t.len()).sum::<usize>().to_string()),
            ("bytes_estimated".into(), self.catalog.estimated_bytes().to_string()),
        ]);
        out
    }

    /// Executes one decoded request and builds its response.
    pub fn handle(&mut self, req: &Request) -> Response {
        self.stats.requests += 1;
        let result = match req {
            Request::Sql(sql) => self.execute(sql).map(|outcome| match outcome {
                Outcome::Rows(rs) => Response::Rows {
                    columns: rs.columns.len(),
                    rows: rs.rows,
                },
                Outcome::Affected(n) => Response::Done(n),
            }),
            Request::Admin(admin) => {
                *self.stats.verbs.entry("admin").or_default() += 1;
                self.admin(admin)
            }
        };
        result.unwrap_or_else(|e| {
            self.stats.errors += 1;
            Response::error(&e)
        })
    }

    fn admin(&mut self, admin: &Admin) -> Result<Response> {
        Ok(match admin {
            Admin::Ping => Response::Pong,
            Admin::Quit => Response::Bye,
            Admin::Stats => Response::Stats(self.stats_report()),
            Admin::Policy { table, clauses } => {
                self.set_policy(table, clauses)?;
                Response::Done(0)
            }
            Admin::Flush(table) => Response::Done(self.flush(table.as_deref())?),
            Admin::Sweep(table) => Response::Done(self.sweep(table)?),
        })
    }
}
