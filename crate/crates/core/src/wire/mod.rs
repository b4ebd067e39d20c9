//! Envelope protocol: typed messages, field-tagged payloads, chunking, and
//! the in-process and TCP transports.

pub mod codec;
mod envelope;
mod schema;
mod socket;
mod transport;

use std::io::{Read, Write};
use std::time::Duration;

pub use envelope::{split, Action, Envelope, ReadError, Reassembler, FORMAT_VERSION, MAGIC};
pub use schema::{Message, RemoteError};
pub use socket::{ServerHandle, SocketTransport, WireServer};
pub use transport::{new_correlation_id, InprocTransport, Service, Transport};

pub const DEFAULT_MAX_CHUNK: usize = 1 << 20;
pub const DEFAULT_HARD_CAP: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireConfig {
    /// Largest payload slice per envelope.
    pub max_chunk: usize,
    /// Largest serialized message accepted or produced.
    pub hard_cap: usize,
}

impl Default for WireConfig {
    fn default() -> Self {
        WireConfig { max_chunk: DEFAULT_MAX_CHUNK, hard_cap: DEFAULT_HARD_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("message {correlation_id:032x} is missing chunk {index}")]
    MissingChunk { correlation_id: u128, index: u32 },
    #[error("message {correlation_id:032x} has chunk {index} twice")]
    DuplicateChunk { correlation_id: u128, index: u32 },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("payload of {size} bytes exceeds cap of {cap}")]
    PayloadTooLarge { size: usize, cap: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("no reply from {endpoint} within {timeout:?}")]
    Timeout { endpoint: String, timeout: Duration },
    #[error("connection to {endpoint} refused: {reason}")]
    ConnectionRefused { endpoint: String, reason: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

impl From<WireError> for TransportError {
    fn from(e: WireError) -> Self {
        TransportError::ProtocolViolation(e.to_string())
    }
}

/// Serializes `message` and splits it into envelopes.
pub fn encode(message: &Message, correlation_id: u128, config: &WireConfig) -> Result<Vec<Envelope>, WireError> {
    let payload = message.to_payload();
    split(message.action(), correlation_id, &payload, config)
}

/// Reassembles a complete set of envelopes and decodes the message.
pub fn decode(envelopes: impl IntoIterator<Item = Envelope>, config: &WireConfig) -> Result<Message, WireError> {
    let mut r = Reassembler::new(config.hard_cap);
    for env in envelopes {
        r.push(env)?;
    }
    let (action, _, payload) = r.finish()?;
    Message::from_payload(action, &payload)
}

/// Writes every envelope of `message` to `out`.
pub fn write_message(out: &mut impl Write, message: &Message, correlation_id: u128, config: &WireConfig) -> Result<(), ReadError> {
    for env in encode(message, correlation_id, config)? {
        env.write_to(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads envelopes from `input` until one message is complete. A stream that
/// ends (or times out) part way through yields `MissingChunk`.
pub fn read_message(input: &mut impl Read, config: &WireConfig) -> Result<(Message, u128), ReadError> {
    let mut r = Reassembler::new(config.hard_cap);
    loop {
        let env = match Envelope::read_from(input, config.hard_cap) {
            Ok(Some(env)) => env,
            Ok(None) if r.correlation_id().is_some() => return Err(r.finish().unwrap_err().into()),
            Ok(None) => return Err(WireError::MalformedPayload("connection closed before any envelope".into()).into()),
            Err(ReadError::Io(e)) if r.correlation_id().is_some() && is_timeout(&e) => {
                return Err(r.finish().unwrap_err().into())
            }
            Err(e) => return Err(e),
        };
        r.push(env)?;
        if r.is_complete() {
            let (action, cid, payload) = r.finish()?;
            return Ok((Message::from_payload(action, &payload)?, cid));
        }
    }
}

pub(crate) fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut)
}
