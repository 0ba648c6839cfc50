//! Memory-only tables.
//!
//! Each table keeps its rows in a B-tree keyed by rowid and one extra
//! B-tree per secondary index, keyed by the indexed column values with the
//! rowid as tiebreaker. Rows carry a hidden insertion timestamp that the
//! expiry engine reads; it is never visible to SQL.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound;

use crate::btree::{BTree, DEFAULT_ORDER};
use crate::datum::{compare_values, parse_numeric, Value};
use crate::error::{Error, Result};
use crate::expiry::ExpiryPolicy;

pub type RowId = i64;

/// Per-row bookkeeping charged on top of the cell values.
const ROW_OVERHEAD: usize = 48;
/// Per-index-entry bookkeeping charged on top of the key values.
const INDEX_ENTRY_OVERHEAD: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Affinity {
    Integer,
    Real,
    Text,
    Blob,
    None,
}

impl Affinity {
    pub fn from_type_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_uppercase().as_str() {
            "INTEGER" | "INT" => Affinity::Integer,
            "REAL" => Affinity::Real,
            "TEXT" => Affinity::Text,
            "BLOB" => Affinity::Blob,
            _ => return None,
        })
    }

    pub fn type_name(self) -> Option<&'static str> {
        match self {
            Affinity::Integer => Some("INTEGER"),
            Affinity::Real => Some("REAL"),
            Affinity::Text => Some("TEXT"),
            Affinity::Blob => Some("BLOB"),
            Affinity::None => None,
        }
    }

    /// Numeric-looking text stored into a numeric column becomes a number;
    /// everything else is stored as given.
    pub fn coerce(self, value: Value) -> Value {
        match (self, value) {
            (Affinity::Integer, Value::Text(t)) => match parse_numeric(&t) {
                Some(Value::Real(r)) if r.fract() == 0.0 && r.abs() < 9.0e18 => {
                    Value::Integer(r as i64)
                }
                Some(n) => n,
                None => Value::Text(t),
            },
            (Affinity::Real, Value::Text(t)) => match parse_numeric(&t) {
                Some(Value::Integer(i)) => Value::Real(i as f64),
                Some(n) => n,
                None => Value::Text(t),
            },
            (_, v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub affinity: Affinity,
}

impl Column {
    pub fn new(name: impl Into<String>, affinity: Affinity) -> Self {
        Column {
            name: name.into(),
            affinity,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub values: Vec<Value>,
    /// Insertion time, milliseconds since the epoch. Not refreshed on update.
    pub ts_ms: i64,
}

impl Row {
    fn footprint(&self) -> usize {
        ROW_OVERHEAD + self.values.iter().map(Value::footprint).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexKey {
    pub values: Vec<Value>,
    pub rowid: RowId,
}

impl IndexKey {
    fn footprint(&self) -> usize {
        INDEX_ENTRY_OVERHEAD + self.values.iter().map(Value::footprint).sum::<usize>()
    }
}

fn cmp_prefix(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match compare_values(x, y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

#[derive(Debug, Clone)]
pub struct Index {
    pub name: String,
    /// Positions of the indexed columns in the table schema.
    pub columns: Vec<usize>,
    tree: BTree<IndexKey, ()>,
}

impl Index {
    fn key_for(&self, rowid: RowId, values: &[Value]) -> IndexKey {
        IndexKey {
            values: self.columns.iter().map(|&c| values[c].clone()).collect(),
            rowid,
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &IndexKey> {
        self.tree.iter().map(|(k, _)| k)
    }

    /// Rowids whose leading index columns equal `prefix`, in index order.
    pub fn seek(&self, prefix: &[Value]) -> impl Iterator<Item = RowId> + '_ {
        let n = prefix.len();
        let owned = prefix.to_vec();
        self.tree
            .range_by(
                |k| cmp_prefix(&k.values[..n], prefix) == Ordering::Less,
                Some(Box::new(move |k: &IndexKey| {
                    cmp_prefix(&k.values[..n], &owned) == Ordering::Greater
                })),
            )
            .map(|(k, _)| k.rowid)
    }

    /// Rowids whose first index column lies within the bounds, in index order.
    pub fn range(&self, lo: Bound<Value>, hi: Bound<Value>) -> impl Iterator<Item = RowId> + '_ {
        let below = |k: &IndexKey| match &lo {
            Bound::Included(v) => compare_values(&k.values[0], v) == Ordering::Less,
            Bound::Excluded(v) => compare_values(&k.values[0], v) != Ordering::Greater,
            Bound::Unbounded => false,
        };
        self.tree
            .range_by(
                below,
                Some(Box::new(move |k: &IndexKey| match &hi {
                    Bound::Included(v) => compare_values(&k.values[0], v) == Ordering::Greater,
                    Bound::Excluded(v) => compare_values(&k.values[0], v) != Ordering::Less,
                    Bound::Unbounded => false,
                })),
            )
            .map(|(k, _)| k.rowid)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.tree.validate()
    }
}

/// A table: schema, row store, secondary indexes and expiry state.
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    rows: BTree<RowId, Row>,
    indexes: Vec<Index>,
    next_rowid: RowId,
    last_ts: i64,
    order: usize,
    bytes: usize,
    pub policy: ExpiryPolicy,
    /// Write statements since the last operation-triggered sweep.
    pub ops_since_sweep: u64,
}

impl fmt::Debug for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Table")
            .field("name", &self.name)
            .field("columns", &self.columns)
            .field("rows", &self.rows.len())
            .field("indexes", &self.indexes.iter().map(|i| &i.name).collect::<Vec<_>>())
            .finish()
    }
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        Self::with_order(name, columns, DEFAULT_ORDER)
    }

    pub fn with_order(name: impl Into<String>, columns: Vec<Column>, order: usize) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name.eq_ignore_ascii_case(&c.name)) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Table {
            name: name.into(),
            columns,
            rows: BTree::with_order(order),
            indexes: Vec::new(),
            next_rowid: 1,
            last_ts: i64::MIN,
            order,
            bytes: 0,
            policy: ExpiryPolicy::default(),
            ops_since_sweep: 0,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn indexes(&self) -> &[Index] {
        &self.indexes
    }

    pub fn index(&self, name: &str) -> Option<&Index> {
        self.indexes.iter().find(|i| i.name.eq_ignore_ascii_case(name))
    }

    /// Estimated bytes held by rows and index entries.
    pub fn estimated_bytes(&self) -> usize {
        self.bytes
    }

    pub fn row(&self, rowid: RowId) -> Option<&Row> {
        self.rows.get(&rowid)
    }

    /// All rows in rowid (insertion) order.
    pub fn scan(&self) -> impl Iterator<Item = (RowId, &Row)> {
        self.rows.iter().map(|(id, row)| (*id, row))
    }

    /// The oldest surviving row.
    pub fn first_row(&self) -> Option<(RowId, &Row)> {
        self.rows.first().map(|(id, row)| (*id, row))
    }

    /// Applies column affinities to a full row of values.
    pub fn coerce_row(&self, values: Vec<Value>) -> Vec<Value> {
        values
            .into_iter()
            .zip(&self.columns)
            .map(|(v, c)| c.affinity.coerce(v))
            .collect()
    }

    /// Appends a row stamped `now_ms` (clamped so timestamps never decrease
    /// in rowid order) and updates every index.
    pub fn insert_row(&mut self, values: Vec<Value>, now_ms: i64) -> Result<RowId> {
        if values.len() != self.columns.len() {
            return Err(Error::ArityMismatch {
                values: values.len(),
                columns: self.columns.len(),
            });
        }
        let values = self.coerce_row(values);
        let rowid = self.next_rowid;
        self.next_rowid = rowid
            .checked_add(1)
            .ok_or_else(|| Error::Internal(format!("rowid space exhausted in {}", self.name)))?;
        let ts_ms = now_ms.max(self.last_ts);
        self.last_ts = ts_ms;
        for index in &mut self.indexes {
            let key = index.key_for(rowid, &values);
            self.bytes += key.footprint();
            index
                .tree
                .insert(key, ())
                .map_err(|_| Error::Internal(format!("index {} out of sync", index.name)))?;
        }
        let row = Row { values, ts_ms };
        self.bytes += row.footprint();
        self.rows
            .insert(rowid, row)
            .map_err(|_| Error::Internal(format!("rowid {rowid} reused")))?;
        Ok(rowid)
    }

    /// Removes a row and its index entries.
    pub fn delete_row(&mut self, rowid: RowId) -> Option<Row> {
        let row = self.rows.remove(&rowid)?;
        self.bytes -= row.footprint();
        for index in &mut self.indexes {
            let key = index.key_for(rowid, &row.values);
            self.bytes -= key.footprint();
            let removed = index.tree.remove(&key);
            debug_assert!(removed.is_some(), "index {} missing rowid {rowid}", index.name);
        }
        Some(row)
    }

    /// Removes the given rows; returns how many were actually present.
    pub fn delete_rows(&mut self, rowids: &[RowId]) -> usize {
        rowids.iter().filter(|&&id| self.delete_row(id).is_some()).count()
    }

    /// Replaces the values of an existing row. Affinities are applied and
    /// only indexes over changed columns are touched. The insertion
    /// timestamp is kept.
    pub fn update_row(&mut self, rowid: RowId, values: Vec<Value>) -> Result<bool> {
        let values = self.coerce_row(values);
        let Some(row) = self.rows.get_mut(&rowid) else {
            return Ok(false);
        };
        let changed: Vec<bool> = row
            .values
            .iter()
            .zip(&values)
            .map(|(a, b)| !crate::datum::identical(a, b))
            .collect();
        if !changed.iter().any(|&c| c) {
            return Ok(true);
        }
        let old = std::mem::replace(&mut row.values, values);
        let new_footprint = row.footprint();
        let new_values = row.values.clone();
        self.bytes = self.bytes + new_footprint - (ROW_OVERHEAD + old.iter().map(Value::footprint).sum::<usize>());
        for index in &mut self.indexes {
            if !index.columns.iter().any(|&c| changed[c]) {
                continue;
            }
            let old_key = index.key_for(rowid, &old);
            let new_key = index.key_for(rowid, &new_values);
            self.bytes = self.bytes + new_key.footprint() - old_key.footprint();
            index.tree.remove(&old_key);
            index
                .tree
                .insert(new_key, ())
                .map_err(|_| Error::Internal(format!("index {} out of sync", index.name)))?;
        }
        Ok(true)
    }

    /// Builds a new index over `columns` and backfills it from existing rows.
    pub fn create_index(&mut self, name: &str, columns: &[String]) -> Result<()> {
        if self.index(name).is_some() {
            return Err(Error::DuplicateIndex(name.to_string()));
        }
        let positions = columns
            .iter()
            .map(|c| self.column_index(c).ok_or_else(|| Error::UnknownColumn(c.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut index = Index {
            name: name.to_string(),
            columns: positions,
            tree: BTree::with_order(self.order),
        };
        for (rowid, row) in self.rows.iter() {
            let key = index.key_for(*rowid, &row.values);
            self.bytes += key.footprint();
            index
                .tree
                .insert(key, ())
                .map_err(|_| Error::Internal(format!("duplicate entry backfilling {name}")))?;
        }
        self.indexes.push(index);
        Ok(())
    }

    /// Removes every row, keeping schema and (now empty) indexes.
    pub fn clear(&mut self) -> usize {
        let n = self.rows.len();
        self.rows.clear();
        for index in &mut self.indexes {
            index.tree.clear();
        }
        self.bytes = 0;
        n
    }

    /// Full consistency audit: every B-tree is structurally valid and each
    /// index holds exactly one entry per row, matching the row's values.
    pub fn audit(&self) -> Result<(), String> {
        self.rows.validate().map_err(|e| format!("{}: row store: {e}", self.name))?;
        let mut last_ts = i64::MIN;
        let mut bytes = 0;
        for (_, row) in self.scan() {
            if row.ts_ms < last_ts {
                return Err(format!("{}: timestamps decrease in rowid order", self.name));
            }
            last_ts = row.ts_ms;
            bytes += row.footprint();
        }
        for index in &self.indexes {
            index.validate().map_err(|e| format!("{}.{}: {e}", self.name, index.name))?;
            if index.len() != self.len() {
                return Err(format!(
                    "{}.{}: {} entries for {} rows",
                    self.name,
                    index.name,
                    index.len(),
                    self.len()
                ));
            }
            for key in index.entries() {
                bytes += key.footprint();
                let row = self
                    .row(key.rowid)
                    .ok_or_else(|| format!("{}.{}: dangling rowid {}", self.name, index.name, key.rowid))?;
                let expect = index.key_for(key.rowid, &row.values);
                if expect.values.iter().zip(&key.values).any(|(a, b)| !crate::datum::identical(a, b)) {
                    return Err(format!(
                        "{}.{}: stale entry for rowid {}",
                        self.name, index.name, key.rowid
                    ));
                }
            }
        }
        if bytes != self.bytes {
            return Err(format!("{}: byte estimate {} != recount {bytes}", self.name, self.bytes));
        }
        Ok(())
    }
}

/// The set of tables. Table and index names are case-insensitive; index
/// names share one namespace across all tables.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: BTreeMap<String, Table>,
    order: Option<usize>,
}

fn fold(name: &str) -> String {
    name.to_ascii_lowercase()
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Catalog whose tables use B-trees of the given order.
    pub fn with_order(order: usize) -> Self {
        Catalog {
            tables: BTreeMap::new(),
            order: Some(order),
        }
    }

    pub fn create_table(&mut self, name: &str, columns: Vec<Column>) -> Result<&mut Table> {
        let key = fold(name);
        if self.tables.contains_key(&key) {
            return Err(Error::DuplicateTable(name.to_string()));
        }
        let table = Table::with_order(name, columns, self.order.unwrap_or(DEFAULT_ORDER))?;
        Ok(self.tables.entry(key).or_insert(table))
    }

    pub fn drop_table(&mut self, name: &str) -> Result<Table> {
        self.tables
            .remove(&fold(name))
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn create_index(&mut self, name: &str, table: &str, columns: &[String]) -> Result<()> {
        if self.tables.values().any(|t| t.index(name).is_some()) {
            return Err(Error::DuplicateIndex(name.to_string()));
        }
        self.table_mut(table)?.create_index(name, columns)
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.get(&fold(name))
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.get(name).ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut Table> {
        self.tables
            .get_mut(&fold(name))
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn tables_mut(&mut self) -> impl Iterator<Item = &mut Table> {
        self.tables.values_mut()
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn estimated_bytes(&self) -> usize {
        self.tables.values().map(Table::estimated_bytes).sum()
    }
}
