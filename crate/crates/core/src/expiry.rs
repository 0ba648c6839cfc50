//! Automatic expiry.
//!
//! Three triggers, configured per table: row age, row count and the number
//! of write operations since the last sweep. Sweeps run lazily, piggybacked
//! on write statements; the row-count cap is also enforced right after each
//! insert. Eviction is always oldest-first by rowid.

use crate::storage::{RowId, Table};

pub const DEFAULT_OPS_PER_SWEEP: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpiryPolicy {
    /// Rows inserted more than this many milliseconds ago are expired.
    pub max_age_ms: Option<u64>,
    /// Upper bound on the table's row count.
    pub max_rows: Option<usize>,
    /// A sweep runs after every this many write statements (always ≥ 1).
    pub ops_per_sweep: u64,
}

impl Default for ExpiryPolicy {
    fn default() -> Self {
        ExpiryPolicy {
            max_age_ms: None,
            max_rows: None,
            ops_per_sweep: DEFAULT_OPS_PER_SWEEP,
        }
    }
}

impl ExpiryPolicy {
    pub fn with_ops(ops_per_sweep: u64) -> Self {
        ExpiryPolicy {
            ops_per_sweep: ops_per_sweep.max(1),
            ..Self::default()
        }
    }
}

/// Rows removed by one expiry pass, split by trigger.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Removed {
    pub by_age: usize,
    pub by_rows: usize,
}

impl Removed {
    pub fn total(&self) -> usize {
        self.by_age + self.by_rows
    }
}

impl std::ops::AddAssign for Removed {
    fn add_assign(&mut self, rhs: Self) {
        self.by_age += rhs.by_age;
        self.by_rows += rhs.by_rows;
    }
}

/// Counts one write statement against the table. When the counter reaches
/// `ops_per_sweep` it resets and a sweep runs; returns what that sweep
/// removed, or `None` if no sweep ran.
pub fn note_operation(table: &mut Table, now_ms: i64) -> Option<Removed> {
    table.ops_since_sweep += 1;
    if table.ops_since_sweep >= table.policy.ops_per_sweep.max(1) {
        table.ops_since_sweep = 0;
        Some(sweep(table, now_ms))
    } else {
        None
    }
}

/// Applies the age trigger, then the row-count trigger.
pub fn sweep(table: &mut Table, now_ms: i64) -> Removed {
    let by_age = match table.policy.max_age_ms {
        Some(age) => expire_older_than(table, now_ms.saturating_sub(age.min(i64::MAX as u64) as i64)),
        None => 0,
    };
    Removed {
        by_age,
        by_rows: enforce_row_cap(table),
    }
}

/// Removes every row stamped before `cutoff_ms`. Timestamps are
/// nondecreasing in rowid order, so these rows form a prefix.
fn expire_older_than(table: &mut Table, cutoff_ms: i64) -> usize {
    let mut removed = 0;
    while let Some((rowid, row)) = table.first_row() {
        if row.ts_ms >= cutoff_ms {
            break;
        }
        table.delete_row(rowid);
        removed += 1;
    }
    removed
}

/// Evicts the oldest rows until the row cap holds.
pub fn enforce_row_cap(table: &mut Table) -> usize {
    let Some(cap) = table.policy.max_rows else {
        return 0;
    };
    let excess = table.len().saturating_sub(cap);
    if excess == 0 {
        return 0;
    }
    let victims: Vec<RowId> = table.scan().take(excess).map(|(id, _)| id).collect();
    table.delete_rows(&victims)
}

/// Removes every row of the table, keeping schema and indexes.
pub fn flush(table: &mut Table) -> usize {
    table.clear()
}
