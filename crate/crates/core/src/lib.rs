//! Federated probabilistic cross-match over autonomous catalog nodes.

pub mod federation;
pub mod portal;
pub mod query;
pub mod skynode;
pub mod skysim;
pub mod sphere;
pub mod value;
pub mod wire;
pub mod xmatch;

pub use federation::{FedError, FedOptions, FedSpec, Federation, TransportKind};
pub use portal::{ExecutionPlan, Portal, PortalConfig, PortalError};
pub use query::{parse, AreaClause, ParseError, QueryAst};
pub use skynode::{NodeCatalog, NodeError, PartialResultSet, SkyNode};
pub use sphere::{angular_distance, SkyPosition, SphereIndex, ARCSEC};
pub use value::{ColumnType, ResultTable, Value};
pub use wire::{Message, WireConfig};
pub use xmatch::{Accumulators, ArchiveNoise, Member};
