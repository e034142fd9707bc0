//! Sign an attestation document and verify it against a one-signer trust root.

use atsa::admission::{evaluate_document, DenyReason};
use atsa::lattice::default_scheme;
use atsa::sad::{canonical_body, sign_document, AttestationDocument, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRootContent};
use chrono::Utc;

fn main() {
    let key = KeyPair::generate("publisher-2026", &mut rand::rngs::OsRng);
    let mut doc = AttestationDocument::new(
        "mcp.example.gmail",
        "example-corp",
        "2.3.1",
        "restricted-plus",
        vec!["mcp-server".into()],
    );
    doc.net_allowed_hosts = Some(vec!["a.example".into()]);

    let signed = sign_document(&doc, &key).unwrap();
    println!("canonical body: {}", String::from_utf8(canonical_body(&signed).unwrap()).unwrap());
    println!("served document:\n{}", signed.to_json_pretty());

    let root = TrustRootContent::new([SignerRecord::for_key(
        &key,
        &["public", "internal", "confidential", "restricted", "restricted-plus"],
    )])
    .unwrap();
    let scheme = default_scheme();
    let bytes = signed.to_json_bytes();

    let verdict = evaluate_document(&bytes, Some("a.example"), "restricted", Utc::now(), &scheme, &root);
    println!("from a.example: {verdict}");
    assert!(verdict.is_allow());

    let verdict = evaluate_document(&bytes, Some("b.example"), "restricted", Utc::now(), &scheme, &root);
    println!("from b.example: {verdict}");
    assert_eq!(verdict.reason(), Some(DenyReason::HostNotBound));

    let mut tampered = signed.clone();
    tampered.version = "2.3.2".into();
    let verdict = evaluate_document(&tampered.to_json_bytes(), Some("a.example"), "restricted", Utc::now(), &scheme, &root);
    println!("version edited after signing: {verdict}");
    assert_eq!(verdict.reason(), Some(DenyReason::BadSignature));
}
