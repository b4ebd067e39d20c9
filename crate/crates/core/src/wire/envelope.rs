//! Envelope framing and chunk reassembly.
//!
//! Every envelope on the wire is:
//!
//! ```text
//! magic        4   b"SKQW"
//! version      1   0x01
//! action_len   1
//! action       action_len bytes, ASCII
//! correlation 16   u128 little-endian
//! chunk_index  4   u32 LE
//! chunk_count  4   u32 LE
//! payload_len  4   u32 LE
//! payload      payload_len bytes
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use super::{WireConfig, WireError};

pub const MAGIC: [u8; 4] = *b"SKQW";
pub const FORMAT_VERSION: u8 = 1;
const FIXED_HEADER: usize = 4 + 1 + 1 + 16 + 4 + 4 + 4;

/// Service action carried in every envelope header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Registration,
    Metadata,
    Information,
    Query,
    CrossMatch,
    SkyQuery,
    Ack,
    Error,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Registration,
        Action::Metadata,
        Action::Information,
        Action::Query,
        Action::CrossMatch,
        Action::SkyQuery,
        Action::Ack,
        Action::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Registration => "Registration",
            Action::Metadata => "Metadata",
            Action::Information => "Information",
            Action::Query => "Query",
            Action::CrossMatch => "CrossMatch",
            Action::SkyQuery => "SkyQuery",
            Action::Ack => "Ack",
            Action::Error => "Error",
        }
    }
}

impl FromStr for Action {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| WireError::UnknownAction(s.to_string()))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub action: Action,
    pub correlation_id: u128,
    pub chunk_index: u32,
    pub chunk_count: u32,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER + self.action.as_str().len() + self.payload.len()
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        let action = self.action.as_str().as_bytes();
        let mut header = Vec::with_capacity(FIXED_HEADER + action.len());
        header.extend_from_slice(&MAGIC);
        header.push(FORMAT_VERSION);
        header.push(action.len() as u8);
        header.extend_from_slice(action);
        header.extend_from_slice(&self.correlation_id.to_le_bytes());
        header.extend_from_slice(&self.chunk_index.to_le_bytes());
        header.extend_from_slice(&self.chunk_count.to_le_bytes());
        header.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.write_all(&header)?;
        out.write_all(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parses one envelope from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8], max_payload: usize) -> Result<(Envelope, usize), WireError> {
        let mut cursor = io::Cursor::new(bytes);
        match Self::read_from(&mut cursor, max_payload) {
            Ok(Some(env)) => Ok((env, cursor.position() as usize)),
            Ok(None) => Err(WireError::MalformedPayload("empty input".into())),
            Err(ReadError::Io(_)) => Err(WireError::MalformedPayload("truncated envelope".into())),
            Err(ReadError::Wire(e)) => Err(e),
        }
    }

    /// Reads one envelope. `Ok(None)` means the stream ended cleanly before
    /// the first byte.
    pub fn read_from(input: &mut impl Read, max_payload: usize) -> Result<Option<Envelope>, ReadError> {
        let mut first = [0u8; 1];
        loop {
            match input.read(&mut first) {
                Ok(0) => return Ok(None),
                Ok(_) => break,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(ReadError::Io(e)),
            }
        }
        let mut magic = [0u8; 4];
        magic[0] = first[0];
        input.read_exact(&mut magic[1..])?;
        if magic != MAGIC {
            return Err(WireError::MalformedPayload("bad envelope magic".into()).into());
        }
        let mut b = [0u8; 2];
        input.read_exact(&mut b)?;
        if b[0] != FORMAT_VERSION {
            return Err(WireError::MalformedPayload(format!("unsupported format version {}", b[0])).into());
        }
        let mut action = vec![0u8; b[1] as usize];
        input.read_exact(&mut action)?;
        let action = std::str::from_utf8(&action)
            .map_err(|_| WireError::UnknownAction(String::from_utf8_lossy(&action).into_owned()))?
            .parse::<Action>()?;
        let mut rest = [0u8; 28];
        input.read_exact(&mut rest)?;
        let correlation_id = u128::from_le_bytes(rest[0..16].try_into().expect("16 bytes"));
        let chunk_index = u32::from_le_bytes(rest[16..20].try_into().expect("4 bytes"));
        let chunk_count = u32::from_le_bytes(rest[20..24].try_into().expect("4 bytes"));
        let len = u32::from_le_bytes(rest[24..28].try_into().expect("4 bytes")) as usize;
        if chunk_count == 0 || chunk_index >= chunk_count {
            return Err(WireError::MalformedPayload(format!("chunk {chunk_index} of {chunk_count}")).into());
        }
        if len > max_payload {
            return Err(WireError::PayloadTooLarge { size: len, cap: max_payload }.into());
        }
        let mut payload = Vec::new();
        input.take(len as u64).read_to_end(&mut payload)?;
        if payload.len() != len {
            return Err(ReadError::Io(io::ErrorKind::UnexpectedEof.into()));
        }
        Ok(Some(Envelope { action, correlation_id, chunk_index, chunk_count, payload }))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Splits a serialized payload into envelopes of at most `max_chunk` bytes.
pub fn split(action: Action, correlation_id: u128, payload: &[u8], config: &WireConfig) -> Result<Vec<Envelope>, WireError> {
    if payload.len() > config.hard_cap {
        return Err(WireError::PayloadTooLarge { size: payload.len(), cap: config.hard_cap });
    }
    let chunk = config.max_chunk.max(1);
    let count = payload.len().div_ceil(chunk).max(1);
    let count = u32::try_from(count).map_err(|_| WireError::PayloadTooLarge { size: payload.len(), cap: config.hard_cap })?;
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let start = i as usize * chunk;
        let end = (start + chunk).min(payload.len());
        out.push(Envelope { action, correlation_id, chunk_index: i, chunk_count: count, payload: payload[start..end].to_vec() });
    }
    Ok(out)
}

/// Collects the chunks of one logical message.
#[derive(Debug)]
pub struct Reassembler {
    cap: usize,
    head: Option<(Action, u128, u32)>,
    chunks: BTreeMap<u32, Vec<u8>>,
    bytes: usize,
}

impl Reassembler {
    pub fn new(cap: usize) -> Self {
        Reassembler { cap, head: None, chunks: BTreeMap::new(), bytes: 0 }
    }

    pub fn correlation_id(&self) -> Option<u128> {
        self.head.map(|h| h.1)
    }

    pub fn is_complete(&self) -> bool {
        self.head.is_some_and(|(_, _, count)| self.chunks.len() == count as usize)
    }

    pub fn push(&mut self, env: Envelope) -> Result<(), WireError> {
        match self.head {
            None => self.head = Some((env.action, env.correlation_id, env.chunk_count)),
            Some((action, cid, count)) => {
                if cid != env.correlation_id {
                    return Err(WireError::MalformedPayload(format!(
                        "chunk for correlation {:032x} mixed into {cid:032x}",
                        env.correlation_id
                    )));
                }
                if count != env.chunk_count || action != env.action {
                    return Err(WireError::MalformedPayload(format!("inconsistent chunk headers in {cid:032x}")));
                }
            }
        }
        if env.chunk_index >= env.chunk_count {
            return Err(WireError::MalformedPayload(format!("chunk {} of {}", env.chunk_index, env.chunk_count)));
        }
        if self.chunks.contains_key(&env.chunk_index) {
            return Err(WireError::DuplicateChunk { correlation_id: env.correlation_id, index: env.chunk_index });
        }
        self.bytes += env.payload.len();
        if self.bytes > self.cap {
            return Err(WireError::PayloadTooLarge { size: self.bytes, cap: self.cap });
        }
        self.chunks.insert(env.chunk_index, env.payload);
        Ok(())
    }

    /// Concatenates chunks in index order; fails on the first gap.
    pub fn finish(self) -> Result<(Action, u128, Vec<u8>), WireError> {
        let (action, cid, count) =
            self.head.ok_or_else(|| WireError::MalformedPayload("no envelopes".into()))?;
        let mut payload = Vec::with_capacity(self.bytes);
        for i in 0..count {
            match self.chunks.get(&i) {
                Some(c) => payload.extend_from_slice(c),
                None => return Err(WireError::MissingChunk { correlation_id: cid, index: i }),
            }
        }
        Ok((action, cid, payload))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIB: usize = 1 << 20;

    #[test]
    fn small_payload_is_one_chunk() {
        let envs = split(Action::Ack, 1, &[0u8; 10], &WireConfig::default()).unwrap();
        assert_eq!(envs.len(), 1);
        assert_eq!(envs[0].chunk_count, 1);
    }

    #[test]
    fn two_and_a_half_mib() {
        let payload = vec![7u8; 5 * MIB / 2];
        let envs = split(Action::CrossMatch, 9, &payload, &WireConfig::default()).unwrap();
        let sizes: Vec<usize> = envs.iter().map(|e| e.payload.len()).collect();
        assert_eq!(sizes, [MIB, MIB, MIB / 2]);
        assert!(envs.iter().all(|e| e.chunk_count == 3 && e.correlation_id == 9));
    }

    #[test]
    fn hard_cap_enforced() {
        let config = WireConfig { max_chunk: 4, hard_cap: 10 };
        assert!(matches!(split(Action::Ack, 0, &[0; 11], &config), Err(WireError::PayloadTooLarge { .. })));
    }

    #[test]
    fn header_layout() {
        let env = Envelope { action: Action::Ack, correlation_id: 0x0102, chunk_index: 0, chunk_count: 1, payload: vec![0xAA] };
        let bytes = env.to_bytes();
        assert_eq!(&bytes[..4], b"SKQW");
        assert_eq!(bytes[4], FORMAT_VERSION);
        assert_eq!(bytes[5], 3);
        assert_eq!(&bytes[6..9], b"Ack");
        assert_eq!(bytes[9], 0x02);
        assert_eq!(bytes[10], 0x01);
        assert_eq!(bytes.len(), env.encoded_len());
        assert_eq!(*bytes.last().unwrap(), 0xAA);
        let (back, used) = Envelope::from_bytes(&bytes, 16).unwrap();
        assert_eq!(back, env);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn unknown_action_rejected() {
        let mut bytes = Envelope { action: Action::Ack, correlation_id: 1, chunk_index: 0, chunk_count: 1, payload: vec![] }.to_bytes();
        bytes[6..9].copy_from_slice(b"Zzz");
        assert_eq!(Envelope::from_bytes(&bytes, 16).unwrap_err(), WireError::UnknownAction("Zzz".into()));
    }

    #[test]
    fn reverse_order_reassembles() {
        let payload: Vec<u8> = (0..100u8).collect();
        let config = WireConfig { max_chunk: 7, ..WireConfig::default() };
        let mut envs = split(Action::Query, 5, &payload, &config).unwrap();
        envs.reverse();
        let mut r = Reassembler::new(config.hard_cap);
        for e in envs {
            r.push(e).unwrap();
        }
        assert!(r.is_complete());
        assert_eq!(r.finish().unwrap().2, payload);
    }

    #[test]
    fn missing_and_duplicate_chunks() {
        let config = WireConfig { max_chunk: 4, ..WireConfig::default() };
        let envs = split(Action::Query, 77, &[1u8; 12], &config).unwrap();
        let mut r = Reassembler::new(config.hard_cap);
        r.push(envs[0].clone()).unwrap();
        r.push(envs[2].clone()).unwrap();
        assert_eq!(r.finish().unwrap_err(), WireError::MissingChunk { correlation_id: 77, index: 1 });

        let mut r = Reassembler::new(config.hard_cap);
        r.push(envs[0].clone()).unwrap();
        assert_eq!(r.push(envs[0].clone()).unwrap_err(), WireError::DuplicateChunk { correlation_id: 77, index: 0 });
    }

    proptest! {
        #[test]
        fn random_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..128)) {
            let _ = Envelope::from_bytes(&bytes, 1 << 16);
            let mut prefixed = MAGIC.to_vec();
            prefixed.push(FORMAT_VERSION);
            prefixed.extend(&bytes);
            let _ = Envelope::from_bytes(&prefixed, 1 << 16);
        }

        #[test]
        fn split_then_reassemble(payload in prop::collection::vec(any::<u8>(), 0..5000), chunk in 1usize..600) {
            let config = WireConfig { max_chunk: chunk, ..WireConfig::default() };
            let envs = split(Action::SkyQuery, 3, &payload, &config).unwrap();
            prop_assert!(envs.iter().all(|e| e.payload.len() <= chunk));
            let mut r = Reassembler::new(config.hard_cap);
            for e in envs {
                let (back, _) = Envelope::from_bytes(&e.to_bytes(), chunk).unwrap();
                r.push(back).unwrap();
            }
            prop_assert_eq!(r.finish().unwrap().2, payload);
        }
    }
}
