//! Append-only, hash-chained audit log.
//!
//! Each record is stored as one canonical-JSON line. A record's hash is
//! `SHA-256(prev_hash ‖ canonical_json(record without "hash"))`, where
//! `prev_hash` is the 64 lowercase hex characters of the previous record's
//! hash (64 zeros for the first record). Any change to a stored line breaks
//! the chain at that line's sequence number.

mod canonical;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use canonical::canonical_json;

use crate::clock::{format_timestamp, parse_timestamp};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    AccessRequested,
    AccessAutoApproved,
    AccessApproved,
    AccessRejected,
    QueryAllowed,
    QueryDenied,
    QueryExecuted,
}

impl AuditEvent {
    pub const ALL: [AuditEvent; 7] = [
        AuditEvent::AccessRequested,
        AuditEvent::AccessAutoApproved,
        AuditEvent::AccessApproved,
        AuditEvent::AccessRejected,
        AuditEvent::QueryAllowed,
        AuditEvent::QueryDenied,
        AuditEvent::QueryExecuted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditEvent::AccessRequested => "access_requested",
            AuditEvent::AccessAutoApproved => "access_auto_approved",
            AuditEvent::AccessApproved => "access_approved",
            AuditEvent::AccessRejected => "access_rejected",
            AuditEvent::QueryAllowed => "query_allowed",
            AuditEvent::QueryDenied => "query_denied",
            AuditEvent::QueryExecuted => "query_executed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }

    /// Payload keys that must be present (values may be null).
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            AuditEvent::AccessRequested => &["product_id", "request_id", "purpose_text", "purpose_category"],
            AuditEvent::AccessAutoApproved | AuditEvent::AccessApproved | AuditEvent::AccessRejected => {
                &["product_id", "request_id"]
            }
            AuditEvent::QueryAllowed => &["product_id", "call_id", "purpose_text", "purpose_category", "sql_text"],
            AuditEvent::QueryDenied => &[
                "product_id",
                "call_id",
                "purpose_text",
                "purpose_category",
                "sql_text",
                "verdict_reasons",
            ],
            AuditEvent::QueryExecuted => &[
                "product_id",
                "call_id",
                "purpose_text",
                "purpose_category",
                "sql_text",
                "result_digest",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: String,
    pub actor: String,
    pub event: AuditEvent,
    pub payload: Map<String, Value>,
    pub prev_hash: String,
    pub hash: String,
}

impl AuditRecord {
    fn body(&self) -> Value {
        json!({
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "event": self.event,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
        })
    }

    /// The hash this record should carry given its other fields.
    pub fn compute_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.prev_hash.as_bytes());
        hasher.update(canonical_json(&self.body()).as_bytes());
        hex::encode(hasher.finalize())
    }

    /// The stored line, without its trailing newline.
    pub fn canonical_line(&self) -> String {
        let mut full = self.body();
        full["hash"] = Value::String(self.hash.clone());
        canonical_json(&full)
    }

    pub fn product_id(&self) -> Option<&str> {
        self.payload.get("product_id").and_then(Value::as_str)
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{event} payload is missing required key {key}")]
    MissingPayloadKey { event: &'static str, key: &'static str },
    #[error("audit storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("existing audit log is broken at seq {first_bad_seq}; refusing to append")]
    Corrupt { first_bad_seq: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Ok { records: u64 },
    Broken { first_bad_seq: u64 },
}

/// Checks stored log bytes line by line. A line is good when it parses, is
/// byte-identical to its canonical form, has the expected seq, links to the
/// previous hash and carries its own correct hash. A final line without a
/// trailing newline (a torn write) counts as broken.
pub fn verify_bytes(data: &[u8]) -> ChainStatus {
    let mut prev_hash = GENESIS_HASH.to_string();
    let mut seq = 0u64;
    let mut rest = data;
    while !rest.is_empty() {
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return ChainStatus::Broken { first_bad_seq: seq };
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        match check_line(line, seq, &prev_hash) {
            Some(hash) => prev_hash = hash,
            None => return ChainStatus::Broken { first_bad_seq: seq },
        }
        seq += 1;
    }
    ChainStatus::Ok { records: seq }
}

fn check_line(line: &[u8], seq: u64, prev_hash: &str) -> Option<String> {
    let record: AuditRecord = serde_json::from_slice(line).ok()?;
    let ok = record.canonical_line().as_bytes() == line
        && record.seq == seq
        && record.prev_hash == prev_hash
        && record.hash == record.compute_hash();
    ok.then_some(record.hash)
}

/// Verifies an audit file on disk.
pub fn verify_file(path: &Path) -> Result<ChainStatus, AuditError> {
    let data = std::fs::read(path).map_err(|source| AuditError::Storage {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(verify_bytes(&data))
}

/// Conjunctive filter for [`AuditLog::query`]; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditFilter {
    pub actor: Option<String>,
    pub product_id: Option<String>,
    pub event: Option<AuditEvent>,
    /// Inclusive lower bound on the record timestamp.
    pub since: Option<DateTime<Utc>>,
}

impl AuditFilter {
    pub fn matches(&self, record: &AuditRecord) -> bool {
        self.actor.as_ref().is_none_or(|a| *a == record.actor)
            && self
                .product_id
                .as_deref()
                .is_none_or(|p| record.product_id() == Some(p))
            && self.event.is_none_or(|e| e == record.event)
            && self
                .since
                .is_none_or(|since| parse_timestamp(&record.timestamp).is_some_and(|t| t >= since))
    }
}

enum Storage {
    Memory(Vec<u8>),
    File { path: PathBuf, file: File, len: u64 },
}

/// The log. Appends go through `&mut self`, so callers serialize writers;
/// the in-memory record list mirrors the stored lines.
pub struct AuditLog {
    storage: Storage,
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self {
            storage: Storage::Memory(Vec::new()),
            records: Vec::new(),
        }
    }

    /// Opens (or creates) a file-backed log. An existing file must verify.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let storage_err = |source| AuditError::Storage {
            path: path.to_path_buf(),
            source,
        };
        let existing = match std::fs::read(path) {
            Ok(data) => data,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(storage_err(e)),
        };
        if let ChainStatus::Broken { first_bad_seq } = verify_bytes(&existing) {
            return Err(AuditError::Corrupt { first_bad_seq });
        }
        let records = existing
            .split(|&b| b == b'\n')
            .filter(|line| !line.is_empty())
            .map(|line| serde_json::from_slice(line).expect("verified line parses"))
            .collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(storage_err)?;
        Ok(Self {
            storage: Storage::File {
                path: path.to_path_buf(),
                file,
                len: existing.len() as u64,
            },
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn last_hash(&self) -> &str {
        self.records.last().map_or(GENESIS_HASH, |r| r.hash.as_str())
    }

    /// Appends one record and persists it before returning. On a write
    /// failure the file is cut back to its previous length.
    pub fn append(
        &mut self,
        event: AuditEvent,
        actor: &str,
        payload: Map<String, Value>,
        now: DateTime<Utc>,
    ) -> Result<AuditRecord, AuditError> {
        for key in event.required_keys() {
            if !payload.contains_key(*key) {
                return Err(AuditError::MissingPayloadKey {
                    event: event.as_str(),
                    key,
                });
            }
        }
        let mut record = AuditRecord {
            seq: self.records.len() as u64,
            timestamp: format_timestamp(&now),
            actor: actor.to_string(),
            event,
            payload,
            prev_hash: self.last_hash().to_string(),
            hash: String::new(),
        };
        record.hash = record.compute_hash();
        let mut line = record.canonical_line();
        line.push('\n');

        match &mut self.storage {
            Storage::Memory(buf) => buf.extend_from_slice(line.as_bytes()),
            Storage::File { path, file, len } => {
                let written = file.write_all(line.as_bytes()).and_then(|()| file.sync_data());
                if let Err(source) = written {
                    let _ = file.set_len(*len);
                    return Err(AuditError::Storage {
                        path: path.clone(),
                        source,
                    });
                }
                *len += line.len() as u64;
            }
        }
        self.records.push(record.clone());
        Ok(record)
    }

    pub fn query(&self, filter: &AuditFilter) -> Vec<AuditRecord> {
        self.records.iter().filter(|r| filter.matches(r)).cloned().collect()
    }

    /// Re-reads the stored bytes and verifies them.
    pub fn verify(&self) -> Result<ChainStatus, AuditError> {
        match &self.storage {
            Storage::Memory(buf) => Ok(verify_bytes(buf)),
            Storage::File { path, .. } => verify_file(path),
        }
    }

    /// Stored bytes of an in-memory log, for inspection.
    pub fn memory_bytes(&self) -> Option<&[u8]> {
        match &self.storage {
            Storage::Memory(buf) => Some(buf),
            Storage::File { .. } => None,
        }
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, SteppingClock};
    use proptest::prelude::*;

    fn payload(product: &str, request: &str) -> Map<String, Value> {
        let v = json!({"product_id": product, "request_id": request});
        v.as_object().unwrap().clone()
    }

    fn filled(n: usize) -> AuditLog {
        let clock = SteppingClock::deterministic();
        let mut log = AuditLog::in_memory();
        for i in 0..n {
            log.append(
                AuditEvent::AccessApproved,
                if i % 2 == 0 { "olivia" } else { "sam" },
                payload(
                    if i % 3 == 0 { "customers" } else { "support-tickets" },
                    &format!("ar-{i}"),
                ),
                clock.now(),
            )
            .unwrap();
        }
        log
    }

    fn lines(log: &AuditLog) -> Vec<Vec<u8>> {
        log.memory_bytes()
            .unwrap()
            .split_inclusive(|&b| b == b'\n')
            .map(<[u8]>::to_vec)
            .collect()
    }

    #[test]
    fn genesis_and_chain_links() {
        let log = filled(2);
        let r = log.records();
        assert_eq!(r[0].seq, 0);
        assert_eq!(r[0].prev_hash, GENESIS_HASH);
        assert_eq!(r[1].prev_hash, r[0].hash);
        assert_eq!(r[0].hash.len(), 64);
        assert!(r[0]
            .hash
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)));
    }

    #[test]
    fn hash_matches_definition() {
        let log = filled(1);
        let record = &log.records()[0];
        let line = std::str::from_utf8(log.memory_bytes().unwrap()).unwrap().trim_end();
        let mut body: Value = serde_json::from_str(line).unwrap();
        body.as_object_mut().unwrap().remove("hash");
        let expected = sha256_hex(format!("{}{}", GENESIS_HASH, canonical_json(&body)).as_bytes());
        assert_eq!(record.hash, expected);
        assert!(line.starts_with(r#"{"actor":"olivia","event":"access_approved","hash":""#));
    }

    #[test]
    fn untampered_log_verifies() {
        assert_eq!(filled(10).verify().unwrap(), ChainStatus::Ok { records: 10 });
        assert_eq!(verify_bytes(b""), ChainStatus::Ok { records: 0 });
    }

    #[test]
    fn deleted_record_breaks_at_gap() {
        let mut ls = lines(&filled(10));
        ls.remove(7);
        assert_eq!(verify_bytes(&ls.concat()), ChainStatus::Broken { first_bad_seq: 7 });
    }

    #[test]
    fn torn_last_line_is_broken() {
        let data = filled(3).memory_bytes().unwrap().to_vec();
        assert_eq!(
            verify_bytes(&data[..data.len() - 1]),
            ChainStatus::Broken { first_bad_seq: 2 }
        );
    }

    #[test]
    fn missing_mandatory_key_is_rejected() {
        let mut log = AuditLog::in_memory();
        let mut p = Map::new();
        p.insert("product_id".into(), json!("customers"));
        let err = log
            .append(
                AuditEvent::QueryDenied,
                "alice",
                p,
                SteppingClock::deterministic().now(),
            )
            .unwrap_err();
        assert!(matches!(err, AuditError::MissingPayloadKey { key: "call_id", .. }));
        assert!(log.is_empty());
    }

    #[test]
    fn filters_are_conjunctive() {
        let log = filled(6);
        assert_eq!(log.query(&AuditFilter::default()).len(), 6);
        let f = AuditFilter {
            actor: Some("olivia".into()),
            product_id: Some("customers".into()),
            ..Default::default()
        };
        let seqs: Vec<u64> = log.query(&f).iter().map(|r| r.seq).collect();
        assert_eq!(seqs, [0]);
        let nobody = AuditFilter {
            actor: Some("nobody".into()),
            ..Default::default()
        };
        assert!(log.query(&nobody).is_empty());
        let since = AuditFilter {
            since: parse_timestamp(&log.records()[4].timestamp),
            ..Default::default()
        };
        assert_eq!(log.query(&since).len(), 2);
    }

    #[test]
    fn file_log_reopens_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let clock = SteppingClock::deterministic();
        {
            let mut log = AuditLog::open(&path).unwrap();
            log.append(
                AuditEvent::AccessApproved,
                "olivia",
                payload("customers", "a"),
                clock.now(),
            )
            .unwrap();
        }
        let mut log = AuditLog::open(&path).unwrap();
        assert_eq!(log.len(), 1);
        log.append(
            AuditEvent::AccessRejected,
            "olivia",
            payload("customers", "b"),
            clock.now(),
        )
        .unwrap();
        assert_eq!(verify_file(&path).unwrap(), ChainStatus::Ok { records: 2 });

        let mut data = std::fs::read(&path).unwrap();
        data.truncate(data.len() - 5);
        std::fs::write(&path, data).unwrap();
        assert!(matches!(
            AuditLog::open(&path),
            Err(AuditError::Corrupt { first_bad_seq: 1 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn any_bit_flip_breaks_at_its_record(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
            let log = filled(8);
            let ls = lines(&log);
            let mut data = ls.concat();
            let at = pos.index(data.len());
            data[at] ^= 1 << bit;
            let mut offset = 0;
            let owner = ls.iter().position(|l| { offset += l.len(); at < offset }).unwrap();
            prop_assert_eq!(verify_bytes(&data), ChainStatus::Broken { first_bad_seq: owner as u64 });
        }
    }
}
