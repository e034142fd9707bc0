//! Hash-chained decision log.
//!
//! Each record's `hash` is `SHA-256(prevHash || canonical({seq, timestamp,
//! event, payload}))`, with an all-zero `prevHash` for record 0. On disk the
//! log is JSON Lines, one record per line.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{self, CanonicalError};
use crate::clock::Clock;

pub type Digest32 = [u8; 32];

pub const GENESIS_HASH: Digest32 = [0u8; 32];

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("unknown audit event `{0}`")]
    UnknownEvent(String),
    #[error("{event} payload is missing `{field}`")]
    MissingField { event: AuditEvent, field: &'static str },
    #[error("audit payload must be a JSON object")]
    PayloadNotObject,
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("audit sink write failed: {0}")]
    Sink(#[from] io::Error),
    #[error("existing audit log is broken at record {0}")]
    BrokenChain(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditEvent {
    #[serde(rename = "mcp.connect.allow")]
    ConnectAllow,
    #[serde(rename = "mcp.connect.deny")]
    ConnectDeny,
    #[serde(rename = "mcp.connect.warn")]
    ConnectWarn,
    #[serde(rename = "mcp.tool.deny")]
    ToolDeny,
}

impl AuditEvent {
    pub const ALL: [AuditEvent; 4] = [
        AuditEvent::ConnectAllow,
        AuditEvent::ConnectDeny,
        AuditEvent::ConnectWarn,
        AuditEvent::ToolDeny,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditEvent::ConnectAllow => "mcp.connect.allow",
            AuditEvent::ConnectDeny => "mcp.connect.deny",
            AuditEvent::ConnectWarn => "mcp.connect.warn",
            AuditEvent::ToolDeny => "mcp.tool.deny",
        }
    }

    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            AuditEvent::ConnectAllow => &["level", "signerKeyId"],
            AuditEvent::ConnectDeny | AuditEvent::ConnectWarn => &["reason"],
            AuditEvent::ToolDeny => &["server", "bridge", "toolName", "reason"],
        }
    }
}

impl fmt::Display for AuditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuditEvent {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AuditEvent::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| AuditError::UnknownEvent(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: String,
    pub event: AuditEvent,
    pub payload: Map<String, Value>,
    #[serde(with = "hex_digest")]
    pub prev_hash: Digest32,
    #[serde(with = "hex_digest")]
    pub hash: Digest32,
}

impl AuditRecord {
    pub fn compute_hash(&self) -> Result<Digest32, CanonicalError> {
        record_hash(
            &self.prev_hash,
            self.seq,
            &self.timestamp,
            self.event,
            &self.payload,
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("audit records always serialize")
    }
}

fn record_hash(
    prev_hash: &Digest32,
    seq: u64,
    timestamp: &str,
    event: AuditEvent,
    payload: &Map<String, Value>,
) -> Result<Digest32, CanonicalError> {
    let body = json!({
        "seq": seq,
        "timestamp": timestamp,
        "event": event.as_str(),
        "payload": payload,
    });
    let mut hasher = Sha256::new();
    hasher.update(prev_hash);
    hasher.update(canonical::to_canonical_bytes(&body)?);
    Ok(hasher.finalize().into())
}

mod hex_digest {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(D::Error::custom("digest must be 64 lowercase hex characters"));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}

/// Where appended records go. Writes must be durable before returning.
pub trait AuditSink: Send {
    fn write(&mut self, record: &AuditRecord) -> io::Result<()>;
}

/// In-memory sink whose records stay readable through a cloned handle.
#[derive(Debug, Clone, Default)]
pub struct RecordingSink {
    records: Arc<Mutex<Vec<AuditRecord>>>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.records().into_iter().map(|r| r.event).collect()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl AuditSink for RecordingSink {
    fn write(&mut self, record: &AuditRecord) -> io::Result<()> {
        self.records
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(record.clone());
        Ok(())
    }
}

/// Append-only JSON Lines file.
#[derive(Debug)]
pub struct JsonlFileSink {
    file: File,
}

impl JsonlFileSink {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }
}

impl AuditSink for JsonlFileSink {
    fn write(&mut self, record: &AuditRecord) -> io::Result<()> {
        let mut line = record.to_json_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

struct LogState {
    next_seq: u64,
    prev_hash: Digest32,
    sink: Box<dyn AuditSink>,
}

/// Single-writer hash-chained log. `append` is serialized; sequence number
/// and link assignment happen under the same lock as the sink write.
pub struct AuditLog {
    state: Mutex<LogState>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        f.debug_struct("AuditLog")
            .field("next_seq", &state.next_seq)
            .finish()
    }
}

impl AuditLog {
    pub fn new(sink: impl AuditSink + 'static, clock: Arc<dyn Clock>) -> Self {
        Self {
            state: Mutex::new(LogState {
                next_seq: 0,
                prev_hash: GENESIS_HASH,
                sink: Box::new(sink),
            }),
            clock,
        }
    }

    /// A log with a fresh recording sink; returns the sink handle too.
    pub fn recording(clock: Arc<dyn Clock>) -> (Self, RecordingSink) {
        let sink = RecordingSink::new();
        (Self::new(sink.clone(), clock), sink)
    }

    /// Open (or create) a JSONL log, resuming the chain after verifying what
    /// is already there.
    pub fn open_jsonl(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, AuditError> {
        let path = path.as_ref();
        let (next_seq, prev_hash) = match std::fs::read(path) {
            Ok(data) => {
                let records = parse_jsonl(&data).map_err(AuditError::BrokenChain)?;
                verify_chain(&records).map_err(AuditError::BrokenChain)?;
                match records.last() {
                    Some(last) => (last.seq + 1, last.hash),
                    None => (0, GENESIS_HASH),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (0, GENESIS_HASH),
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            state: Mutex::new(LogState {
                next_seq,
                prev_hash,
                sink: Box::new(JsonlFileSink::open(path)?),
            }),
            clock,
        })
    }

    pub fn append(&self, event: AuditEvent, payload: Value) -> Result<AuditRecord, AuditError> {
        let Value::Object(payload) = payload else {
            return Err(AuditError::PayloadNotObject);
        };
        for &field in event.required_fields() {
            if !payload.contains_key(field) {
                return Err(AuditError::MissingField { event, field });
            }
        }
        let timestamp = self
            .clock
            .now()
            .to_rfc3339_opts(SecondsFormat::Micros, true);

        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let hash = record_hash(&state.prev_hash, state.next_seq, &timestamp, event, &payload)?;
        let record = AuditRecord {
            seq: state.next_seq,
            timestamp,
            event,
            payload,
            prev_hash: state.prev_hash,
            hash,
        };
        state.sink.write(&record)?;
        state.next_seq += 1;
        state.prev_hash = hash;
        Ok(record)
    }

    pub fn append_named(&self, event: &str, payload: Value) -> Result<AuditRecord, AuditError> {
        self.append(event.parse()?, payload)
    }

    pub fn len(&self) -> u64 {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length and last hash of the chain, for anchoring outside the log.
    pub fn head(&self) -> ChainHead {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        ChainHead {
            len: state.next_seq,
            hash: state.prev_hash,
        }
    }
}

/// A chain length plus the hash of its last record (genesis when empty).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainHead {
    pub len: u64,
    pub hash: Digest32,
}

/// `Ok(())` iff every record recomputes and links to its predecessor;
/// otherwise the index of the first record that does not.
pub fn verify_chain(records: &[AuditRecord]) -> Result<(), usize> {
    let mut expected_prev = GENESIS_HASH;
    for (i, record) in records.iter().enumerate() {
        if record.seq != i as u64 || record.prev_hash != expected_prev {
            return Err(i);
        }
        match record.compute_hash() {
            Ok(h) if h == record.hash => {}
            _ => return Err(i),
        }
        expected_prev = record.hash;
    }
    Ok(())
}

fn split_lines(data: &[u8]) -> Vec<&[u8]> {
    let mut lines: Vec<&[u8]> = data.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

/// Parse JSON Lines; a line that does not parse as a record yields its index.
pub fn parse_jsonl(data: &[u8]) -> Result<Vec<AuditRecord>, usize> {
    split_lines(data)
        .into_iter()
        .enumerate()
        .map(|(i, line)| serde_json::from_slice(line).map_err(|_| i))
        .collect()
}

/// Replay a JSONL log: the record count, or the first bad index.
pub fn verify_jsonl(data: &[u8]) -> Result<usize, usize> {
    let lines = split_lines(data);
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_slice::<AuditRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) => {
                // Records before an unparseable line are still checked first.
                verify_chain(&records)?;
                return Err(i);
            }
        }
    }
    verify_chain(&records)?;
    Ok(records.len())
}

/// Replay a log and also check it ends at `head`. Replay alone cannot see
/// records cut from, or validly appended to, the tail.
pub fn verify_jsonl_anchored(data: &[u8], head: ChainHead) -> Result<usize, usize> {
    let expected = head.len as usize;
    let n = match verify_jsonl(data) {
        Ok(n) => n,
        Err(i) if i > expected => return Err(expected),
        Err(i) => return Err(i),
    };
    if n != expected {
        return Err(n.min(expected));
    }
    let last = parse_jsonl(data)?.last().map(|r| r.hash).unwrap_or(GENESIS_HASH);
    if last != head.hash {
        return Err(expected.saturating_sub(1));
    }
    Ok(n)
}
