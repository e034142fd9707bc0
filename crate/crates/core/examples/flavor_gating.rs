//! The same failing server under the open and enclaved flavors, plus a
//! passing server, with the audit record each decision leaves.

use std::sync::Arc;

use atsa::admission::{Admission, Flavor, StaticFetcher};
use atsa::audit::AuditLog;
use atsa::clock::SystemClock;
use atsa::lattice::default_scheme;
use atsa::sad::{sign_document, AttestationDocument, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRoot, TrustRootContent};

fn main() {
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let root = Arc::new(TrustRoot::new(
        TrustRootContent::new([SignerRecord::for_key(&key, &["public", "internal", "confidential", "restricted", "restricted-plus"])]).unwrap(),
    ));
    let doc = AttestationDocument::new("mcp.example.drive", "example-corp", "1.0.0", "restricted", vec!["mcp-server".into()]);
    let good = sign_document(&doc, &key).unwrap();
    let mut forged = good.clone();
    forged.clearance = "restricted-plus".into();

    for (label, served) in [("forged", forged), ("genuine", good)] {
        let (log, sink) = AuditLog::recording(Arc::new(SystemClock));
        let admission = Admission::new(
            Arc::new(default_scheme()),
            root.clone(),
            Arc::new(StaticFetcher::serving(served.to_json_bytes())),
            Arc::new(SystemClock),
            Arc::new(log),
        );
        for flavor in [Flavor::Open, Flavor::Enclaved] {
            let result = admission.connect("https://drive.example/mcp", "restricted", flavor, false).unwrap();
            let record = sink.records().pop().unwrap();
            println!(
                "{label:<8} {flavor:<9} -> {:?} ({}) {}",
                result.status,
                record.event.as_str(),
                serde_json::Value::Object(record.payload)
            );
        }
    }
}
