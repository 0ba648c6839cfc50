//! Engine for `sqcached`, a memory-only cache daemon that speaks a SQL subset.

pub mod btree;
pub mod clock;
pub mod datum;
pub mod engine;
pub mod error;
pub mod executor;
pub mod expiry;
pub mod protocol;
pub mod sql;
pub mod storage;

pub use clock::{Clock, ManualClock, SystemClock};
pub use datum::Value;
pub use engine::{Engine, EngineConfig, Outcome, Stats};
pub use error::{Error, Result};
pub use executor::ResultSet;
pub use protocol::{Admin, PolicyClause, Request, Response};
