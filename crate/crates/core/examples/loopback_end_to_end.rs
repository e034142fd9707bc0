//! Serve a signed document and an echo tool on loopback, then connect and
//! invoke through the gateway over real HTTP.

use std::sync::Arc;

use atsa::admission::{Admission, Flavor, HttpFetcher};
use atsa::audit::AuditLog;
use atsa::clock::SystemClock;
use atsa::gateway::{Gateway, HttpTransport, RegistryEntry, ToolCall};
use atsa::lattice::default_scheme;
use atsa::sad::{sign_document, AttestationDocument, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRoot, TrustRootContent};
use atsa::wellknown_server::{serve, StubServerConfig, ToolBehavior};
use serde_json::json;

fn main() {
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let mut doc = AttestationDocument::new("mcp.example.gmail", "example-corp", "2.3.1", "restricted-plus", vec!["mcp-server".into()]);
    doc.net_allowed_hosts = Some(vec!["127.0.0.1".into()]);
    let doc = sign_document(&doc, &key).unwrap();

    let server = serve(
        StubServerConfig::default()
            .with_document(&doc)
            .with_tool("list_labels", ToolBehavior::Echo)
            .with_tool("delete_everything", ToolBehavior::Echo),
    )
    .unwrap();
    let endpoint = server.mcp_url();
    println!("stub server at {endpoint}");

    let (log, sink) = AuditLog::recording(Arc::new(SystemClock));
    let admission = Arc::new(Admission::new(
        Arc::new(default_scheme()),
        Arc::new(TrustRoot::new(
            TrustRootContent::new([SignerRecord::for_key(&key, &["public", "internal", "confidential", "restricted", "restricted-plus"])]).unwrap(),
        )),
        Arc::new(HttpFetcher::default()),
        Arc::new(SystemClock),
        Arc::new(log),
    ));
    println!("connect: {:?}", admission.connect(&endpoint, "restricted-plus", Flavor::Enclaved, false).unwrap().status);

    let gateway = Gateway::new(admission);
    gateway
        .register(RegistryEntry::new(&endpoint, "gmail", "restricted-plus", ["list_labels"], Arc::new(HttpTransport::new(&endpoint))))
        .unwrap();
    gateway.freeze();

    let ok = gateway.invoke(&endpoint, &ToolCall::new("list_labels", json!({"max": 5})), Flavor::Enclaved).unwrap();
    println!("list_labels: {ok:?}");
    let denied = gateway.invoke(&endpoint, &ToolCall::new("delete_everything", json!({})), Flavor::Enclaved).unwrap();
    println!("delete_everything: {denied:?}");

    let counters = server.counters();
    println!(
        "server saw {} attestation GETs and {} tools/call POSTs ({:?})",
        counters.attestation_gets(),
        counters.tool_calls(),
        counters.tool_names()
    );
    for record in sink.records() {
        println!("audit #{} {}", record.seq, record.event.as_str());
    }
}
