//! A gateway with a two-name allowlist. Look-alike names are refused before
//! the transport is touched; only exact names go through.

use std::sync::Arc;

use atsa::admission::{Admission, Flavor, StaticFetcher};
use atsa::audit::AuditLog;
use atsa::clock::SystemClock;
use atsa::gateway::{CountingTransport, Gateway, RegistryEntry, ToolCall};
use atsa::lattice::default_scheme;
use atsa::sad::{sign_document, AttestationDocument, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRoot, TrustRootContent};
use serde_json::json;

const ENDPOINT: &str = "https://gmail.example/mcp";

fn main() {
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let doc = sign_document(
        &AttestationDocument::new("mcp.example.gmail", "example-corp", "2.3.1", "restricted-plus", vec!["mcp-server".into()]),
        &key,
    )
    .unwrap();
    let (log, sink) = AuditLog::recording(Arc::new(SystemClock));
    let admission = Arc::new(Admission::new(
        Arc::new(default_scheme()),
        Arc::new(TrustRoot::new(
            TrustRootContent::new([SignerRecord::for_key(&key, &["public", "internal", "confidential", "restricted", "restricted-plus"])]).unwrap(),
        )),
        Arc::new(StaticFetcher::serving(doc.to_json_bytes())),
        Arc::new(SystemClock),
        Arc::new(log),
    ));
    let transport = Arc::new(CountingTransport::echo());
    let gateway = Gateway::new(admission);
    gateway
        .register(RegistryEntry::new(ENDPOINT, "gmail", "restricted-plus", ["list_labels", "get_message"], transport.clone()))
        .unwrap();
    gateway.freeze();

    for name in [
        "list_labels ",
        "List_Labels",
        "list_labels; delete_everything",
        "../list_labels",
        "list_lab\u{0435}ls",
        "list\u{200b}_labels",
        "__proto__",
        "list_labels\",\"name\":\"send_email",
        "list_label",
        "list_labels",
        "get_message",
    ] {
        let result = gateway.invoke(ENDPOINT, &ToolCall::new(name, json!({"id": "42"})), Flavor::Enclaved).unwrap();
        println!("{:<40} {:?} (transport calls so far: {})", format!("{name:?}"), result.status(), transport.calls());
    }
    println!("audit records: {}", sink.len());
}
