//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the crate's canonicalizer.
#![allow(dead_code)]

use std::sync::Arc;

use atsa::admission::{Admission, DocumentFetcher, StaticFetcher};
use atsa::audit::{AuditLog, RecordingSink};
use atsa::clock::FixedClock;
use atsa::lattice::default_scheme;
use atsa::sad::{sign_document, AttestationDocument, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRoot, TrustRootContent};
use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const UP_TO_RP: &[&str] = &["public", "internal", "confidential", "restricted", "restricted-plus"];

/// Canonical body of vector 1 signed under key id `S`, computed once with
/// `oracle_canonical` and frozen.
pub const GOLDEN_VECTOR1_BODY: &str = r#"{"capabilities":["mcp-server"],"clearance":"restricted-plus","id":"mcp.example.gmail","netAllowedHosts":[],"publisher":"example-corp","signerKeyId":"S","v":1,"version":"2.3.1"}"#;

pub fn oracle_canonical(v: &Value) -> String {
    match v {
        Value::Null => "null".to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            assert!(n.is_i64() || n.is_u64(), "oracle only encodes integers");
            n.to_string()
        }
        Value::String(s) => oracle_string(s),
        Value::Array(items) => {
            let mut parts: Vec<String> = items.iter().map(oracle_canonical).collect();
            parts.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            format!("[{}]", parts.join(","))
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", oracle_string(k), oracle_canonical(&map[k])))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
    }
}

fn oracle_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        let esc = match c {
            '"' => "\\\"".to_string(),
            '\\' => "\\\\".to_string(),
            '\u{8}' => "\\b".to_string(),
            '\u{c}' => "\\f".to_string(),
            '\n' => "\\n".to_string(),
            '\r' => "\\r".to_string(),
            '\t' => "\\t".to_string(),
            c if (c as u32) < 0x20 => format!("\\u{:04x}", c as u32),
            c => c.to_string(),
        };
        out.push_str(&esc);
    }
    out.push('"');
    out
}

/// The signed body of a raw document object: the registered fields, with
/// `signerKeyId` null when absent or null, and the other optionals dropped
/// when absent or null.
pub fn oracle_body(raw: &Value) -> String {
    let obj = raw.as_object().expect("document object");
    let mut body = serde_json::Map::new();
    for k in ["v", "id", "publisher", "version", "clearance", "capabilities"] {
        body.insert(k.into(), obj[k].clone());
    }
    body.insert(
        "signerKeyId".into(),
        obj.get("signerKeyId").cloned().unwrap_or(Value::Null),
    );
    for k in ["verification", "netAllowedHosts"] {
        match obj.get(k) {
            None | Some(Value::Null) => {}
            Some(v) => {
                body.insert(k.into(), v.clone());
            }
        }
    }
    oracle_canonical(&Value::Object(body))
}

pub fn oracle_record_hash(prev: &[u8; 32], seq: u64, timestamp: &str, event: &str, payload: &Value) -> [u8; 32] {
    let body = serde_json::json!({"seq": seq, "timestamp": timestamp, "event": event, "payload": payload});
    let mut h = Sha256::new();
    h.update(prev);
    h.update(oracle_canonical(&body).as_bytes());
    h.finalize().into()
}

/// First index at which a parsed JSONL log stops being a valid chain, worked
/// out from the raw JSON with the oracle hash.
pub fn oracle_first_bad(data: &[u8]) -> Option<usize> {
    let mut lines: Vec<&[u8]> = data.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let mut prev = [0u8; 32];
    for (i, line) in lines.iter().enumerate() {
        let Ok(Value::Object(rec)) = serde_json::from_slice::<Value>(line) else {
            return Some(i);
        };
        let mut keys: Vec<&str> = rec.keys().map(String::as_str).collect();
        keys.sort();
        if keys != ["event", "hash", "payload", "prevHash", "seq", "timestamp"] {
            return Some(i);
        }
        let hex32 = |v: &Value| -> Option<[u8; 32]> {
            let s = v.as_str()?;
            if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                return None;
            }
            hex::decode(s).ok()?.try_into().ok()
        };
        let known_event = rec["event"]
            .as_str()
            .is_some_and(|e| ["mcp.connect.allow", "mcp.connect.deny", "mcp.connect.warn", "mcp.tool.deny"].contains(&e));
        let (Some(stored_prev), Some(stored_hash), Some(seq), Some(ts), true, true) = (
            hex32(&rec["prevHash"]),
            hex32(&rec["hash"]),
            rec["seq"].as_u64(),
            rec["timestamp"].as_str(),
            known_event,
            rec["payload"].is_object(),
        ) else {
            return Some(i);
        };
        if seq != i as u64 || stored_prev != prev {
            return Some(i);
        }
        if oracle_record_hash(&prev, seq, ts, rec["event"].as_str().unwrap(), &rec["payload"]) != stored_hash {
            return Some(i);
        }
        prev = stored_hash;
    }
    None
}

pub fn fixed_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 6, 1, 0, 0, 0).unwrap()
}

pub fn signer_s() -> KeyPair {
    KeyPair::from_seed("S", [7u8; 32])
}

pub fn root_for(key: &KeyPair) -> TrustRootContent {
    TrustRootContent::new([SignerRecord::for_key(key, UP_TO_RP)]).unwrap()
}

pub fn signed_baseline(key: &KeyPair) -> AttestationDocument {
    let mut doc = AttestationDocument::new(
        "mcp.example.gmail",
        "example-corp",
        "2.3.1",
        "restricted-plus",
        vec!["mcp-server".into()],
    );
    doc.net_allowed_hosts = Some(vec![]);
    sign_document(&doc, key).unwrap()
}

pub struct Harness {
    pub admission: Arc<Admission>,
    pub sink: RecordingSink,
    pub clock: Arc<FixedClock>,
}

pub fn harness_with(root: TrustRootContent, fetcher: Arc<dyn DocumentFetcher>) -> Harness {
    let clock = Arc::new(FixedClock::new(fixed_now()));
    let (log, sink) = AuditLog::recording(clock.clone());
    let trust_root = Arc::new(TrustRoot::new(root));
    trust_root.lock();
    let admission = Arc::new(Admission::new(
        Arc::new(default_scheme()),
        trust_root,
        fetcher,
        clock.clone(),
        Arc::new(log),
    ));
    Harness { admission, sink, clock }
}

pub fn harness_serving(key: &KeyPair, doc: &AttestationDocument) -> Harness {
    harness_with(root_for(key), Arc::new(StaticFetcher::serving(doc.to_json_bytes())))
}

pub const ALLOWED: [&str; 2] = ["list_labels", "get_message"];

/// Hand-written evasions of `ALLOWED`, with their category.
pub const HANDWRITTEN_EVASIONS: [(&str, &str); 34] = [
    ("whitespace_control", "list_labels "),
    ("whitespace_control", " list_labels"),
    ("whitespace_control", "list_labels\n"),
    ("whitespace_control", "list_labels\u{0}"),
    ("whitespace_control", "get_message\t"),
    ("separator_chaining", "list_labels; delete_everything"),
    ("separator_chaining", "list_labels && send_email"),
    ("separator_chaining", "list_labels|forward_all"),
    ("separator_chaining", "get_message,delete_all_messages"),
    ("near_miss", "list_label"),
    ("near_miss", "list_labelss"),
    ("near_miss", "get_messages"),
    ("near_miss", "lsit_labels"),
    ("path_traversal", "../list_labels"),
    ("path_traversal", "list_labels/../delete_everything"),
    ("path_traversal", "..%2fget_message"),
    ("homoglyph_zero_width_rtl", "list_lab\u{0435}ls"),
    ("homoglyph_zero_width_rtl", "\u{0440}et_message"),
    ("homoglyph_zero_width_rtl", "list\u{200b}_labels"),
    ("homoglyph_zero_width_rtl", "list_labels\u{202e}"),
    ("homoglyph_zero_width_rtl", "\u{ff4c}ist_labels"),
    ("homoglyph_zero_width_rtl", "get_message\u{feff}"),
    ("case_variant", "LIST_LABELS"),
    ("case_variant", "List_labels"),
    ("case_variant", "List_Labels"),
    ("case_variant", "Get_Message"),
    ("prototype_probe", "__proto__"),
    ("prototype_probe", "constructor"),
    ("prototype_probe", "list_labels.__proto__"),
    ("json_smuggling", "list_labels\",\"name\":\"delete_everything"),
    ("json_smuggling", "{\"name\":\"list_labels\"}"),
    ("json_smuggling", "\\u006cist_labels"),
    ("unclassified", ""),
    ("unclassified", "delete_everything"),
];

/// A JSONL log of `n` records of mixed events, as the crate writes it.
pub fn sample_log(n: usize) -> Vec<u8> {
    use atsa::audit::AuditEvent;
    let clock = Arc::new(FixedClock::new(fixed_now()));
    let (log, sink) = AuditLog::recording(clock.clone());
    for i in 0..n {
        clock.advance(chrono::Duration::milliseconds(1 + i as i64 % 7));
        let (event, payload) = match i % 4 {
            0 => (AuditEvent::ConnectAllow, serde_json::json!({"server": format!("https://s{i}.example/mcp"), "level": "RESTRICTED", "signerKeyId": "S"})),
            1 => (AuditEvent::ConnectDeny, serde_json::json!({"server": "https://b.example/mcp", "reason": "bad_signature", "detail": "x\ny"})),
            2 => (AuditEvent::ConnectWarn, serde_json::json!({"server": "https://b.example/mcp", "reason": "unsigned", "note": "open flavor: warn-only"})),
            _ => (AuditEvent::ToolDeny, serde_json::json!({"server": "https://a.example/mcp", "bridge": "gmail", "toolName": format!("tool\u{200b}{i}"), "reason": "not in allowedTools"})),
        };
        log.append(event, payload).unwrap();
    }
    sink.records().iter().flat_map(|r| (r.to_json_line() + "\n").into_bytes()).collect()
}

pub fn split_records(data: &[u8]) -> Vec<Vec<u8>> {
    data.split(|&b| b == b'\n').filter(|l| !l.is_empty()).map(<[u8]>::to_vec).collect()
}

pub fn join_records(lines: &[Vec<u8>]) -> Vec<u8> {
    lines.iter().flat_map(|l| l.iter().copied().chain(std::iter::once(b'\n'))).collect()
}

fn case_forms(name: &str) -> Vec<String> {
    let alternating: String = name
        .chars()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { c.to_ascii_lowercase() } else { c.to_ascii_uppercase() })
        .collect();
    vec![name.to_string(), name.to_ascii_lowercase(), name.to_ascii_uppercase(), alternating]
}

/// Exhaustive order and naming checks for one scheme; returns the number of
/// comparisons made.
pub fn check_lattice(scheme: &atsa::lattice::ClassificationScheme) -> Result<usize, String> {
    let levels = scheme.levels();
    let mut checks = 0;
    for a in levels {
        for b in levels {
            let ab = scheme.meets(&a.canonical_name, &b.canonical_name).map_err(|e| e.to_string())?;
            let ba = scheme.meets(&b.canonical_name, &a.canonical_name).map_err(|e| e.to_string())?;
            if !(ab || ba) {
                return Err(format!("{}: {} and {} are incomparable", scheme.name(), a.canonical_name, b.canonical_name));
            }
            if ab != (a.rank >= b.rank) {
                return Err(format!("{}: meets({}, {}) disagrees with ranks", scheme.name(), a.canonical_name, b.canonical_name));
            }
            // Every spelling of every name of a against every spelling of b.
            for an in std::iter::once(&a.canonical_name).chain(&a.aliases) {
                for bn in std::iter::once(&b.canonical_name).chain(&b.aliases) {
                    for af in case_forms(an) {
                        for bf in case_forms(bn) {
                            checks += 1;
                            if scheme.meets(&af, &bf).map_err(|e| e.to_string())? != ab {
                                return Err(format!("{}: meets({af}, {bf}) differs from canonical", scheme.name()));
                            }
                        }
                    }
                }
            }
            for c in levels {
                checks += 1;
                let bc = scheme.meets(&b.canonical_name, &c.canonical_name).unwrap();
                let ac = scheme.meets(&a.canonical_name, &c.canonical_name).unwrap();
                if ab && bc && !ac {
                    return Err(format!("{}: transitivity fails at {}, {}, {}", scheme.name(), a.canonical_name, b.canonical_name, c.canonical_name));
                }
            }
        }
        if !scheme.meets(&a.canonical_name, &a.canonical_name).unwrap() {
            return Err(format!("{}: {} does not meet itself", scheme.name(), a.canonical_name));
        }
    }
    Ok(checks)
}

/// Scheme files whose ranks are not exactly 0..n.
pub fn non_contiguous_fixtures() -> Vec<Vec<u8>> {
    let rank_sets: &[&[u32]] = &[&[1], &[0, 2], &[1, 2, 3], &[0, 1, 3], &[0, 0], &[0, 1, 1], &[5, 6, 7], &[0, 2, 4, 6], &[3, 2, 0], &[0, 1, 2, 4], &[4294967295]];
    rank_sets
        .iter()
        .map(|ranks| {
            let levels: Vec<Value> = ranks
                .iter()
                .enumerate()
                .map(|(i, r)| serde_json::json!({"rank": r, "canonicalName": format!("L{i}")}))
                .collect();
            serde_json::to_vec(&serde_json::json!({"name": "bad", "levels": levels})).unwrap()
        })
        .collect()
}

pub fn arb_string() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9._-]{0,12}",
        any::<String>(),
        prop::collection::vec(prop_oneof![Just('"'), Just('\\'), Just('\u{1}'), Just('\u{1f}'), Just('\n'), Just('\u{7f}'), Just('\u{2028}'), Just('é'), Just('\u{10348}')], 0..6)
            .prop_map(|v| v.into_iter().collect()),
    ]
}

pub fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|n| json!(n)),
        any::<u64>().prop_map(|n| json!(n)),
        arb_string().prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map(arb_string(), inner, 0..6)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

/// A document as raw JSON text with shuffled key order, plus the parsed
/// value of the same text.
pub fn arb_document_text() -> impl Strategy<Value = (String, Value)> {
    (
        (arb_string(), arb_string(), arb_string(), arb_string()),
        prop::collection::vec(arb_string(), 0..5),
        prop::option::of(prop::option::of(arb_string())),
        prop::option::of(arb_string()),
        prop::option::of(prop::collection::vec(arb_string(), 0..4)),
        prop::option::of("[A-Za-z0-9+/]{86}=="),
        prop::collection::btree_map("x[a-z]{1,6}", arb_json(), 0..3),
        any::<u64>(),
    )
        .prop_filter("required strings are non-empty", |((id, p, v, c), ..)| {
            ![id, p, v, c].iter().any(|s| s.is_empty())
        })
        .prop_filter("signerKeyId non-empty when present", |(_, _, key, ..)| {
            !matches!(key, Some(Some(s)) if s.is_empty())
        })
        .prop_map(|((id, publisher, version, clearance), caps, key, verification, hosts, sig, extra, shuffle)| {
            let mut fields: Vec<(String, Value)> = vec![
                ("v".into(), json!(1)),
                ("id".into(), json!(id)),
                ("publisher".into(), json!(publisher)),
                ("version".into(), json!(version)),
                ("clearance".into(), json!(clearance)),
                ("capabilities".into(), json!(caps)),
            ];
            if let Some(k) = key {
                fields.push(("signerKeyId".into(), json!(k)));
            }
            if let Some(v) = verification {
                fields.push(("verification".into(), json!(v)));
            }
            if let Some(h) = hosts {
                fields.push(("netAllowedHosts".into(), json!(h)));
            }
            if let Some(s) = sig {
                fields.push(("signature".into(), json!(s)));
            }
            for (k, v) in extra {
                fields.push((k, v));
            }
            let mut state = shuffle;
            for i in (1..fields.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                fields.swap(i, (state >> 33) as usize % (i + 1));
            }
            let text = format!(
                "{{{}}}",
                fields
                    .iter()
                    .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), serde_json::to_string(v).unwrap()))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            let value = serde_json::from_str(&text).unwrap();
            (text, value)
        })
}
