mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use atsa::conformance::vectors::{Expectation, ManifestEntry};
use serde_json::{json, Value};

fn atsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atsa"))
        .args(args)
        .env_remove("ATSA_TRUST_ROOT")
        .env_remove("ATSA_SCHEME")
        .env_remove("ATSA_FLAVOR")
        .env_remove("ATSA_AUDIT")
        .env_remove("ATSA_REGISTRY")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn keygen_writes_a_private_and_a_public_file_once() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("signer");
    let out = atsa(&["keygen", s(&key), "--key-id", "S"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let public: Value = serde_json::from_slice(&std::fs::read(dir.path().join("signer.pub")).unwrap()).unwrap();
    assert_eq!(public["keyId"], "S");
    assert!(public.get("privateKey").is_none());
    use base64::Engine as _;
    let pk = base64::engine::general_purpose::STANDARD.decode(public["publicKey"].as_str().unwrap()).unwrap();
    assert_eq!(pk.len(), 32);
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(std::fs::metadata(&key).unwrap().permissions().mode() & 0o777, 0o600);
    }
    let again = atsa(&["keygen", s(&key)]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("already exists"));
}

fn write_body(dir: &Path, v: u64) -> std::path::PathBuf {
    let p = dir.join(format!("body-v{v}.json"));
    let body = json!({"v": v, "id": "mcp.example.gmail", "publisher": "example-corp", "version": "2.3.1",
        "clearance": "restricted-plus", "capabilities": ["mcp-server"], "netAllowedHosts": ["a.example"]});
    std::fs::write(&p, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
    p
}

#[test]
fn sign_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("S");
    assert!(atsa(&["keygen", s(&key)]).status.success());
    let body = write_body(dir.path(), 1);
    let signed = dir.path().join("signed.json");
    let out = atsa(&["sign", s(&body), "--key", s(&key), "--out", s(&signed)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let again = atsa(&["sign", s(&signed), "--key", s(&key)]);
    let first: Value = serde_json::from_slice(&std::fs::read(&signed).unwrap()).unwrap();
    let second: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(first["signature"], second["signature"], "Ed25519 signing is deterministic");

    let public: Value = serde_json::from_slice(&std::fs::read(dir.path().join("S.pub")).unwrap()).unwrap();
    let root = dir.path().join("root.json");
    std::fs::write(&root, serde_json::to_vec(&json!({"signers": [{"keyId": public["keyId"], "publicKey": public["publicKey"],
        "approvedClearance": ["public", "internal", "confidential", "restricted", "restricted-plus"]}]})).unwrap()).unwrap();

    let ok = atsa(&["--trust-root", s(&root), "verify", s(&signed), "--required", "restricted", "--origin", "a.example"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let wrong_host = atsa(&["--trust-root", s(&root), "--json", "verify", s(&signed), "--required", "restricted", "--origin", "b.example"]);
    assert_eq!(wrong_host.status.code(), Some(1));
    assert_eq!(stderr(&wrong_host).trim(), "host_not_bound");
    let report: Value = serde_json::from_slice(&wrong_host.stdout).unwrap();
    assert_eq!(report["reason"], "host_not_bound");

    let v2 = write_body(dir.path(), 2);
    let refused = atsa(&["sign", s(&v2), "--key", s(&key)]);
    assert_eq!(refused.status.code(), Some(2));

    let public_only = atsa(&["sign", s(&body), "--key", s(&dir.path().join("S.pub"))]);
    assert_eq!(public_only.status.code(), Some(2));
}

#[test]
fn exported_vectors_verify_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let out = atsa(&["vectors", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("11/11 pass"));

    let manifest: Vec<ManifestEntry> = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.len(), 11);
    for m in manifest {
        let now = m.now.to_rfc3339();
        let out = atsa(&[
            "--trust-root", s(&dir.path().join(&m.trust_root)),
            "verify", s(&dir.path().join(&m.sad)),
            "--required", &m.required, "--origin", &m.origin, "--now", &now,
        ]);
        match m.expected {
            Expectation::Admit => assert_eq!(out.status.code(), Some(0), "vector {}: {}", m.index, stderr(&out)),
            Expectation::Deny(reason) => {
                assert_eq!(out.status.code(), Some(1), "vector {}", m.index);
                assert_eq!(stderr(&out).trim(), reason.as_str(), "vector {}", m.index);
            }
        }
    }
}

#[test]
fn verify_config_errors_are_not_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(atsa(&["verify", s(&missing), "--required", "public"]).status.code(), Some(2));
    let root = dir.path().join("root.json");
    std::fs::write(&root, br#"{"signers":[]}"#).unwrap();
    assert_eq!(atsa(&["--trust-root", s(&root), "verify", s(&missing), "--required", "public"]).status.code(), Some(2));
    assert_eq!(atsa(&["--trust-root", s(&root), "--scheme", "nope", "verify", s(&root), "--required", "public"]).status.code(), Some(2));
    assert_eq!(atsa(&["--flavor", "loose", "vectors"]).status.code(), Some(2));
}

#[test]
fn fuzz_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let a = atsa(&["fuzz", "--seed", "1", "--per-category", "30", "--corpus-out", s(&corpus)]);
    let b = atsa(&["fuzz", "--seed", "1", "--per-category", "30"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let replay = atsa(&["fuzz", "--seed", "1", "--corpus-in", s(&corpus)]);
    assert_eq!(replay.stdout, a.stdout);

    // A corpus containing an exact allowlist member is not an evasion and
    // must be reported as admitted.
    std::fs::write(&corpus, b"{\"category\":\"near_miss\",\"input\":\"list_labels\",\"expectation\":\"denied_zero_writes\"}\n").unwrap();
    let bad = atsa(&["fuzz", "--seed", "1", "--corpus-in", s(&corpus)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn audit_verify_reports_the_first_bad_index() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("audit.jsonl");
    let mut data = common::sample_log(12);
    std::fs::write(&log, &data).unwrap();
    let ok = atsa(&["audit-verify", s(&log)]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("12 records"));

    let lines = common::split_records(&data);
    let offset: usize = lines[..5].iter().map(|l| l.len() + 1).sum::<usize>() + 20;
    data[offset] ^= 0x01;
    std::fs::write(&log, &data).unwrap();
    let bad = atsa(&["--json", "audit-verify", s(&log)]);
    assert_eq!(bad.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["firstBadIndex"], 5);
    assert!(stderr(&bad).contains("index 5"));
}

#[test]
fn serve_and_invoke_through_a_registry() {
    let dir = tempfile::tempdir().unwrap();
    let key = dir.path().join("S");
    assert!(atsa(&["keygen", s(&key)]).status.success());
    let body = dir.path().join("body.json");
    std::fs::write(&body, serde_json::to_vec(&json!({"v": 1, "id": "mcp.example.gmail", "publisher": "example-corp",
        "version": "2.3.1", "clearance": "restricted", "capabilities": ["mcp-server"]})).unwrap()).unwrap();
    let sad = dir.path().join("sad.json");
    assert!(atsa(&["sign", s(&body), "--key", s(&key), "--out", s(&sad)]).status.success());
    let config = dir.path().join("serve.json");
    std::fs::write(&config, serde_json::to_vec(&json!({"sadPath": "sad.json", "echo": ["list_labels", "delete_everything"]})).unwrap()).unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_atsa"))
        .args(["serve", s(&config)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut base = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut base).unwrap();
    let endpoint = format!("{}/mcp", base.trim());

    let public: Value = serde_json::from_slice(&std::fs::read(dir.path().join("S.pub")).unwrap()).unwrap();
    let root = dir.path().join("root.json");
    std::fs::write(&root, serde_json::to_vec(&json!({"signers": [{"keyId": public["keyId"], "publicKey": public["publicKey"],
        "approvedClearance": ["restricted"]}]})).unwrap()).unwrap();
    let registry = dir.path().join("registry.json");
    std::fs::write(&registry, serde_json::to_vec(&json!([{"endpoint": endpoint, "bridgeId": "gmail", "requiredClearance": "restricted",
        "allowedTools": ["list_labels"]}])).unwrap()).unwrap();
    let audit = dir.path().join("audit.jsonl");
    let common_args = ["--trust-root", s(&root), "--registry", s(&registry), "--audit", s(&audit), "--flavor", "enclaved", "--lock"];

    let ok = atsa(&[&common_args[..], &["invoke", &endpoint, "list_labels", "--args", r#"{"max":2}"#]].concat());
    let denied = atsa(&[&common_args[..], &["invoke", &endpoint, "delete_everything"]].concat());
    let unregistered = atsa(&[&common_args[..], &["invoke", "http://127.0.0.1:9/mcp", "list_labels"]].concat());
    let _ = child.kill();
    let _ = child.wait();

    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let result: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(result, json!({"echo": {"name": "list_labels", "arguments": {"max": 2}}}));
    assert_eq!(denied.status.code(), Some(1));
    assert_eq!(stderr(&denied).trim(), "tool_not_admitted");
    assert_eq!(unregistered.status.code(), Some(1));
    assert_eq!(stderr(&unregistered).trim(), "no_registered_bridge");

    let verified = atsa(&["audit-verify", s(&audit)]);
    assert!(String::from_utf8_lossy(&verified.stdout).contains("3 records"), "{}", String::from_utf8_lossy(&verified.stdout));
}
