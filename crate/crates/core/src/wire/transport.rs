use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, RwLock};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::{read_message, write_message, Message, ReadError, TransportError, WireConfig};

/// Something that answers requests: a node, the portal, or a test double.
pub trait Service: Send + Sync {
    fn handle(&self, request: Message) -> Message;
}

impl<F> Service for F
where
    F: Fn(Message) -> Message + Send + Sync,
{
    fn handle(&self, request: Message) -> Message {
        self(request)
    }
}

/// Request-response RPC over named endpoints.
pub trait Transport: Send + Sync {
    fn call(&self, endpoint: &str, request: &Message, timeout: Duration) -> Result<Message, TransportError>;
}

/// Process-unique, hard-to-collide correlation id.
pub fn new_correlation_id() -> u128 {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let seq = COUNTER.fetch_add(1, Ordering::Relaxed) as u128;
    (nanos << 64) ^ ((std::process::id() as u128) << 32) ^ seq
}

/// In-process transport. Every call still goes through envelope encoding and
/// reassembly, so it exercises the same bytes as the socket transport.
#[derive(Clone, Default)]
pub struct InprocTransport {
    services: Arc<RwLock<HashMap<String, Arc<dyn Service>>>>,
    config: WireConfig,
}

impl InprocTransport {
    pub fn new(config: WireConfig) -> Self {
        InprocTransport { services: Arc::default(), config }
    }

    pub fn config(&self) -> WireConfig {
        self.config
    }

    pub fn register(&self, endpoint: impl Into<String>, service: Arc<dyn Service>) {
        self.services.write().expect("service registry poisoned").insert(endpoint.into(), service);
    }

    pub fn unregister(&self, endpoint: &str) {
        self.services.write().expect("service registry poisoned").remove(endpoint);
    }
}

fn to_bytes(m: &Message, cid: u128, config: &WireConfig) -> Result<Vec<u8>, TransportError> {
    let mut buf = Vec::new();
    write_message(&mut buf, m, cid, config).map_err(read_error)?;
    Ok(buf)
}

pub(crate) fn read_error(e: ReadError) -> TransportError {
    match e {
        ReadError::Wire(w) => w.into(),
        ReadError::Io(io) => TransportError::ProtocolViolation(io.to_string()),
    }
}

impl Transport for InprocTransport {
    fn call(&self, endpoint: &str, request: &Message, timeout: Duration) -> Result<Message, TransportError> {
        let service = self
            .services
            .read()
            .expect("service registry poisoned")
            .get(endpoint)
            .cloned()
            .ok_or_else(|| TransportError::ConnectionRefused {
                endpoint: endpoint.to_string(),
                reason: "no such in-process endpoint".into(),
            })?;
        let cid = new_correlation_id();
        let request_bytes = to_bytes(request, cid, &self.config)?;
        let config = self.config;
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name(format!("inproc-{endpoint}"))
            .spawn(move || {
                let reply = match read_message(&mut request_bytes.as_slice(), &config) {
                    Ok((m, _)) => service.handle(m),
                    Err(e) => Message::error("ProtocolViolation", read_error(e).to_string()),
                };
                let _ = tx.send(to_bytes(&reply, cid, &config));
            })
            .map_err(|e| TransportError::ConnectionRefused { endpoint: endpoint.to_string(), reason: e.to_string() })?;
        let bytes = match rx.recv_timeout(timeout) {
            Ok(b) => b?,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                return Err(TransportError::Timeout { endpoint: endpoint.to_string(), timeout })
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                return Err(TransportError::ProtocolViolation(format!("{endpoint} dropped the request")))
            }
        };
        let (reply, reply_cid) = read_message(&mut bytes.as_slice(), &self.config).map_err(read_error)?;
        if reply_cid != cid {
            return Err(TransportError::ProtocolViolation(format!("reply correlation {reply_cid:032x} != {cid:032x}")));
        }
        Ok(reply)
    }
}
