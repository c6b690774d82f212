//! Crate-wide error type.

use crate::model::{Key, TableId, Tid};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Predicate intersection was requested across different tables (caller bug).
    #[error("cross-table predicate intersection: table {0} vs table {1}")]
    CrossTableIntersection(TableId, TableId),

    /// Dependency classification requires populated read/write sets.
    #[error("transaction {0} classified before execution")]
    NotExecuted(Tid),

    /// A read targeted a key that does not exist in the store.
    #[error("key not found: table {table} pk {pk}", table = .0.table_id, pk = .0.primary_key)]
    KeyNotFound(Key),

    /// Two versions with the same transaction id were installed on one chain.
    #[error("duplicate version install for tid {0}")]
    DuplicateInstall(Tid),

    /// A phase-ordering rule was violated (e.g. GC while versions are still pending).
    #[error("phase order violation: {0}")]
    PhaseOrder(String),

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Schema mismatch between records, predicates, or models.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// Serialization or I/O failure for external interfaces.
    #[error("io: {0}")]
    Io(String),

    /// An internal invariant did not hold; never silent corruption.
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
