//! The mediator: registration, count-star planning, chain initiation and
//! result relay.

mod plan;
mod service;

pub use plan::{order_stages, result_key_column};
pub use service::{Portal, PortalConfig, Registry, RegistryEntry};

use crate::query::{AreaClause, ColumnRef, NodeQuery, ParseError};
use crate::skynode::NodeError;
use crate::xmatch::ArchiveNoise;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub archive_name: String,
    pub endpoint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageRole {
    Mandatory,
    Dropout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStage {
    pub archive_name: String,
    pub endpoint: String,
    pub node_query: NodeQuery,
    pub role: StageRole,
    pub noise: ArchiveNoise,
    /// Count-star estimate; absent for drop-outs.
    pub count: Option<u64>,
}

/// Ordered chain of node fragments. Stage `i` calls stage `i + 1`; the last
/// stage executes first and returns 1-tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub stages: Vec<PlanStage>,
    pub theta: f64,
    pub area: AreaClause,
    pub select: Vec<ColumnRef>,
    pub correlation_id: u128,
}

impl ExecutionPlan {
    /// Archive names in execution order (tail first).
    pub fn execution_order(&self) -> Vec<&str> {
        self.stages.iter().rev().map(|s| s.archive_name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PortalError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("archive {0} is not registered")]
    UnregisteredArchive(String),
    #[error("archive {0} is already registered")]
    DuplicateArchiveName(String),
    #[error("registration callback to {archive} failed: {reason}")]
    CallbackFailed { archive: String, reason: String },
    #[error("performance query on {archive} failed: {reason}")]
    PerformanceQueryFailed { archive: String, reason: String },
    #[error("cross-match chain failed: {0}")]
    ChainTransportError(String),
    #[error("forced stage order is not a permutation of the mandatory archives")]
    InvalidOrder,
    #[error("{kind}: {message}")]
    Remote { kind: String, message: String },
    #[error(transparent)]
    Node(#[from] NodeError),
}

impl PortalError {
    pub fn kind(&self) -> &str {
        match self {
            PortalError::Parse(ParseError::Syntax { .. }) => "SyntaxError",
            PortalError::Parse(ParseError::Semantic(_)) => "SemanticError",
            PortalError::UnregisteredArchive(_) => "UnregisteredArchive",
            PortalError::DuplicateArchiveName(_) => "DuplicateArchiveName",
            PortalError::CallbackFailed { .. } => "CallbackFailed",
            PortalError::PerformanceQueryFailed { .. } => "PerformanceQueryFailed",
            PortalError::ChainTransportError(_) => "ChainTransportError",
            PortalError::InvalidOrder => "InvalidOrder",
            PortalError::Remote { kind, .. } => kind,
            PortalError::Node(e) => e.kind(),
        }
    }
}
