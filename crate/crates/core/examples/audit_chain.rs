//! Append audit records to a JSONL file, replay the chain, then flip one
//! byte and replay again.

use std::sync::Arc;

use atsa::audit::{verify_jsonl, AuditEvent, AuditLog};
use atsa::clock::SystemClock;
use serde_json::json;

fn main() {
    let dir = tempdir();
    let path = dir.join("audit.jsonl");
    let log = AuditLog::open_jsonl(&path, Arc::new(SystemClock)).unwrap();
    log.append(AuditEvent::ConnectAllow, json!({"server": "https://a.example/mcp", "level": "RESTRICTED-PLUS", "signerKeyId": "S"})).unwrap();
    log.append(AuditEvent::ToolDeny, json!({"server": "https://a.example/mcp", "bridge": "gmail", "toolName": "List_Labels", "reason": "not in allowedTools"})).unwrap();
    log.append(AuditEvent::ConnectDeny, json!({"server": "https://b.example/mcp", "reason": "bad_signature"})).unwrap();
    drop(log);

    let mut bytes = std::fs::read(&path).unwrap();
    print!("{}", String::from_utf8_lossy(&bytes));
    println!("replay: {:?}", verify_jsonl(&bytes));

    let at = bytes.windows(11).position(|w| w == b"List_Labels").unwrap();
    bytes[at] = b'l';
    println!("after rewriting the denied tool name: first bad index {:?}", verify_jsonl(&bytes).unwrap_err());
    std::fs::remove_dir_all(dir).ok();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("atsa-audit-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
