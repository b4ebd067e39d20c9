//! Starting a portal plus nodes in one process, over either transport, and
//! talking to a running portal.
//!
//! A federation spec is TOML:
//!
//! ```toml
//! transport = "socket"          # or "inproc"
//! max_chunk = 1048576
//! call_timeout_secs = 30
//! chain_timeout_secs = 300
//!
//! [portal]
//! endpoint = "127.0.0.1:7400"
//!
//! [[node]]
//! name = "SDSS"
//! endpoint = "127.0.0.1:7401"
//! catalog = "data/SDSS.csv"      # relative to the spec file
//! table = "Primary"
//! sigma_arcsec = 0.1
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::portal::{ExecutionPlan, Portal, PortalConfig, PortalError};
use crate::query::QueryAst;
use crate::skynode::{register_with_portal, CatalogError, NodeCatalog, NodeError, PartialResultSet, SkyNode};
use crate::value::ResultTable;
use crate::wire::{InprocTransport, Message, ServerHandle, SocketTransport, Transport, TransportError, WireConfig, WireServer};
use crate::xmatch::ArchiveNoise;

pub const DEFAULT_HTM_DEPTH: u8 = 10;

#[derive(Debug, thiserror::Error)]
pub enum FedError {
    #[error("federation spec: {0}")]
    Spec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog {path}: {source}")]
    Catalog { path: PathBuf, source: CatalogError },
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Portal(#[from] PortalError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{kind}: {message}")]
    Remote { kind: String, message: String },
}

impl FedError {
    /// Error kind as reported on the wire, for remote errors.
    pub fn kind(&self) -> &str {
        match self {
            FedError::Remote { kind, .. } => kind,
            FedError::Portal(e) => e.kind(),
            FedError::Node(e) => e.kind(),
            FedError::Transport(_) => "TransportError",
            FedError::Spec(_) | FedError::Io(_) | FedError::Catalog { .. } => "ConfigError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Inproc,
    #[default]
    Socket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortalSpec {
    pub endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub endpoint: String,
    pub catalog: PathBuf,
    #[serde(default = "default_table")]
    pub table: String,
    pub sigma_arcsec: f64,
}

fn default_table() -> String {
    "Primary".into()
}
fn default_chunk() -> usize {
    crate::wire::DEFAULT_MAX_CHUNK
}
fn default_call_timeout() -> f64 {
    30.0
}
fn default_chain_timeout() -> f64 {
    300.0
}
fn default_depth() -> u8 {
    DEFAULT_HTM_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedSpec {
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_chunk")]
    pub max_chunk: usize,
    #[serde(default = "default_call_timeout")]
    pub call_timeout_secs: f64,
    #[serde(default = "default_chain_timeout")]
    pub chain_timeout_secs: f64,
    #[serde(default = "default_depth")]
    pub htm_depth: u8,
    pub portal: PortalSpec,
    #[serde(default)]
    pub node: Vec<NodeSpec>,
}

impl FedSpec {
    pub fn from_toml(text: &str) -> Result<Self, FedError> {
        let spec: FedSpec = toml::from_str(text).map_err(|e| FedError::Spec(e.to_string()))?;
        if spec.max_chunk == 0 {
            return Err(FedError::Spec("max_chunk must be positive".into()));
        }
        for t in [spec.call_timeout_secs, spec.chain_timeout_secs] {
            if !(t.is_finite() && t > 0.0) {
                return Err(FedError::Spec(format!("timeouts must be positive seconds, got {t}")));
            }
        }
        Ok(spec)
    }

    /// Reads a spec; relative catalog paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, FedError> {
        let mut spec = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for n in &mut spec.node {
            if n.catalog.is_relative() {
                n.catalog = base.join(&n.catalog);
            }
        }
        Ok(spec)
    }

    pub fn options(&self) -> FedOptions {
        let wire = WireConfig { max_chunk: self.max_chunk, ..WireConfig::default() };
        let call = Duration::from_secs_f64(self.call_timeout_secs);
        let chain = Duration::from_secs_f64(self.chain_timeout_secs);
        FedOptions {
            transport: self.transport,
            wire,
            portal: PortalConfig { call_timeout: call, chain_timeout: chain },
            node_call_timeout: chain,
            read_timeout: call,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FedOptions {
    pub transport: TransportKind,
    pub wire: WireConfig,
    pub portal: PortalConfig,
    /// Timeout for a node's call to the next stage.
    pub node_call_timeout: Duration,
    /// Socket read timeout on the serving side.
    pub read_timeout: Duration,
}

impl FedOptions {
    pub fn new(transport: TransportKind, wire: WireConfig) -> Self {
        FedOptions {
            transport,
            wire,
            portal: PortalConfig::default(),
            node_call_timeout: crate::skynode::DEFAULT_CALL_TIMEOUT,
            read_timeout: Duration::from_secs(30),
        }
    }
}

/// A running portal and its registered nodes.
pub struct Federation {
    transport: Arc<dyn Transport>,
    inproc: Option<InprocTransport>,
    portal: Arc<Portal>,
    portal_endpoint: String,
    nodes: Vec<(String, String, Arc<SkyNode>)>,
    options: FedOptions,
    servers: Vec<ServerHandle>,
}

impl Federation {
    /// Starts the portal at `portal_endpoint`; nodes are added with
    /// [`Federation::add_node`]. With sockets, port 0 picks a free port.
    pub fn start_portal(portal_endpoint: &str, options: FedOptions) -> Result<Self, FedError> {
        let (transport, inproc): (Arc<dyn Transport>, _) = match options.transport {
            TransportKind::Inproc => {
                let t = InprocTransport::new(options.wire);
                (Arc::new(t.clone()), Some(t))
            }
            TransportKind::Socket => (Arc::new(SocketTransport::new(options.wire)), None),
        };
        let portal = Arc::new(Portal::new(Arc::clone(&transport), options.portal));
        let mut fed = Federation {
            transport,
            inproc,
            portal: Arc::clone(&portal),
            portal_endpoint: String::new(),
            nodes: Vec::new(),
            options,
            servers: Vec::new(),
        };
        fed.portal_endpoint = fed.serve(portal_endpoint, portal)?;
        Ok(fed)
    }

    fn serve(&mut self, endpoint: &str, service: Arc<dyn crate::wire::Service>) -> Result<String, FedError> {
        match &self.inproc {
            Some(t) => {
                t.register(endpoint, service);
                Ok(endpoint.to_string())
            }
            None => {
                let handle = WireServer::spawn(endpoint, service, self.options.wire, self.options.read_timeout)?;
                let ep = handle.endpoint();
                self.servers.push(handle);
                Ok(ep)
            }
        }
    }

    /// Serves `catalog` at `endpoint` and registers it with the portal.
    /// Returns the bound endpoint.
    pub fn add_node(&mut self, catalog: NodeCatalog, endpoint: &str) -> Result<String, FedError> {
        let name = catalog.archive_name().to_string();
        let node = Arc::new(SkyNode::new(catalog, Arc::clone(&self.transport)).with_call_timeout(self.options.node_call_timeout));
        let ep = self.serve(endpoint, Arc::clone(&node) as Arc<dyn crate::wire::Service>)?;
        if let Err(e) = register_with_portal(self.transport.as_ref(), &self.portal_endpoint, &name, &ep, self.options.portal.call_timeout) {
            self.withdraw(&ep);
            return Err(e.into());
        }
        self.nodes.push((name, ep.clone(), node));
        Ok(ep)
    }

    fn withdraw(&mut self, endpoint: &str) {
        match &self.inproc {
            Some(t) => t.unregister(endpoint),
            None => self.servers.retain(|s| s.endpoint() != endpoint),
        }
    }

    /// Portal plus one node per catalog on ephemeral endpoints.
    pub fn local(catalogs: Vec<NodeCatalog>, options: FedOptions) -> Result<Self, FedError> {
        let inproc = options.transport == TransportKind::Inproc;
        let mut fed = Self::start_portal(if inproc { "portal" } else { "127.0.0.1:0" }, options)?;
        for c in catalogs {
            let ep = if inproc { format!("node/{}", c.archive_name()) } else { "127.0.0.1:0".to_string() };
            fed.add_node(c, &ep)?;
        }
        Ok(fed)
    }

    /// Loads every catalog named in `spec` and starts the federation,
    /// reporting each step through `log`.
    pub fn from_spec(spec: &FedSpec, mut log: impl FnMut(&str)) -> Result<Self, FedError> {
        let mut fed = Self::start_portal(&spec.portal.endpoint, spec.options())?;
        log(&format!("portal ready at {}", fed.portal_endpoint));
        for n in &spec.node {
            let noise = ArchiveNoise::from_arcsec(n.sigma_arcsec).map_err(|e| FedError::Spec(format!("node {}: {e}", n.name)))?;
            let cat = NodeCatalog::from_csv_path(&n.catalog, &n.name, &n.table, noise, spec.htm_depth)
                .map_err(|source| FedError::Catalog { path: n.catalog.clone(), source })?;
            let rows = cat.len();
            let ep = fed.add_node(cat, &n.endpoint)?;
            log(&format!("node {} ready at {} ({} objects), registered", n.name, ep, rows));
        }
        Ok(fed)
    }

    pub fn portal(&self) -> &Portal {
        &self.portal
    }

    pub fn portal_endpoint(&self) -> &str {
        &self.portal_endpoint
    }

    pub fn transport(&self) -> Arc<dyn Transport> {
        Arc::clone(&self.transport)
    }

    /// (archive, endpoint) of each node in registration order.
    pub fn node_endpoints(&self) -> Vec<(&str, &str)> {
        self.nodes.iter().map(|(n, e, _)| (n.as_str(), e.as_str())).collect()
    }

    pub fn node(&self, archive: &str) -> Option<&SkyNode> {
        self.nodes.iter().find(|(n, _, _)| n == archive).map(|(_, _, node)| node.as_ref())
    }

    /// Sends a SkyQuery request to the portal over the transport.
    pub fn query(&self, text: &str) -> Result<ResultTable, FedError> {
        let timeout = self.options.portal.chain_timeout + self.options.portal.call_timeout;
        remote_skyquery(self.transport.as_ref(), &self.portal_endpoint, text, timeout)
    }

    /// Plans and executes through the portal directly, returning the plan and
    /// final partial results as well.
    pub fn run(&self, ast: &QueryAst, forced: Option<&[&str]>) -> Result<(ResultTable, ExecutionPlan, PartialResultSet), FedError> {
        Ok(self.portal.run(ast, forced)?)
    }

    /// Stops all servers.
    pub fn shutdown(self) {}
}

impl Drop for Federation {
    fn drop(&mut self) {
        for s in &mut self.servers {
            s.stop();
        }
        // Services hold the transport, so inproc registrations form a cycle.
        if let Some(t) = &self.inproc {
            t.unregister(&self.portal_endpoint);
            for (_, ep, _) in &self.nodes {
                t.unregister(ep);
            }
        }
    }
}

/// Submits `text` to a portal and waits for the result table.
pub fn remote_skyquery(transport: &dyn Transport, portal: &str, text: &str, timeout: Duration) -> Result<ResultTable, FedError> {
    match transport.call(portal, &Message::SkyQuery(text.to_string()), timeout)? {
        Message::SkyQueryResult(t) => Ok(t),
        Message::Error(e) => Err(FedError::Remote { kind: e.kind, message: e.message }),
        other => Err(FedError::Remote { kind: "ProtocolViolation".into(), message: format!("unexpected reply kind {}", other.kind()) }),
    }
}
