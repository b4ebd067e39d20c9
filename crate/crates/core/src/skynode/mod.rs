//! One autonomous catalog node: an in-memory columnar table with a sphere
//! index, answering Information, Metadata, Query and CrossMatch requests.

mod catalog;
mod eval;
mod node;

pub use catalog::{read_catalog_csv, write_catalog_csv, CatalogError, NodeCatalog};
pub use eval::{compile_predicates, CompiledPredicate};
pub use node::{register_with_portal, SkyNode, DEFAULT_CALL_TIMEOUT};

use crate::value::{ColumnType, Value};
use crate::wire::TransportError;
use crate::xmatch::{ArchiveNoise, CandidateTuple, XmatchError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub ty: ColumnType,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        ColumnSchema { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
    pub row_count: u64,
}

/// Metadata service reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDescription {
    pub archive_name: String,
    pub tables: Vec<TableSchema>,
}

/// Information service reply.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInformation {
    pub archive_name: String,
    pub noise: ArchiveNoise,
    pub primary_table: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowSet {
    pub columns: Vec<ColumnSchema>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Count(u64),
    Rows(RowSet),
}

/// Descriptor of one column carried along the chain for the final SELECT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarriedColumn {
    pub alias: String,
    pub column: String,
    pub ty: ColumnType,
}

/// Tuples shipped from one node to the next.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialResultSet {
    pub tuples: Vec<CandidateTuple>,
    pub schema: Vec<CarriedColumn>,
    /// Plan stage that produced this set.
    pub stage: u32,
    /// Tuples sent by each executed stage, in execution order.
    pub transfers: Vec<u64>,
}

impl PartialResultSet {
    pub fn total_transferred(&self) -> u64 {
        self.transfers.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NodeError {
    #[error("node is not initialized")]
    NodeUninitialized,
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("plan stage {stage} does not address archive {archive}")]
    PlanStageMismatch { stage: u32, archive: String },
    #[error("downstream call to {endpoint} failed: {reason}")]
    ChainTransportError { endpoint: String, reason: String },
    #[error("portal unreachable: {0}")]
    PortalUnreachable(String),
    #[error("archive {0} is already registered")]
    DuplicateArchiveName(String),
    #[error("{kind}: {message}")]
    Remote { kind: String, message: String },
    #[error(transparent)]
    Xmatch(#[from] XmatchError),
}

impl NodeError {
    pub fn kind(&self) -> &str {
        match self {
            NodeError::NodeUninitialized => "NodeUninitialized",
            NodeError::UnknownTable(_) => "UnknownTable",
            NodeError::UnknownColumn(_) => "UnknownColumn",
            NodeError::TypeError(_) => "TypeError",
            NodeError::PlanStageMismatch { .. } => "PlanStageMismatch",
            NodeError::ChainTransportError { .. } => "ChainTransportError",
            NodeError::PortalUnreachable(_) => "PortalUnreachable",
            NodeError::DuplicateArchiveName(_) => "DuplicateArchiveName",
            NodeError::Remote { kind, .. } => kind,
            NodeError::Xmatch(_) => "XmatchError",
        }
    }

    pub(crate) fn chain(endpoint: &str, e: TransportError) -> Self {
        NodeError::ChainTransportError { endpoint: endpoint.to_string(), reason: e.to_string() }
    }
}
