//! The eleven admission conformance vectors. Vector 1 is a valid baseline
//! signed by `S`; every other vector is one mutation of it.

use std::fmt;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::admission::{verify_server_clearance, DenyReason, StaticFetcher, VerificationRequest, Verdict};
use crate::lattice::{default_scheme, ClassificationScheme};
use crate::sad::{sign_document, AttestationDocument, KeyPair};
use crate::trustroot::{SignerRecord, TrustRootContent};

pub const REQUIRED_LEVEL: &str = "restricted-plus";
pub const BOUND_HOST: &str = "a.example";
pub const BOUND_ORIGIN: &str = "https://a.example/mcp";
pub const FOREIGN_ORIGIN: &str = "https://b.example/mcp";

pub const UP_TO_RESTRICTED_PLUS: &[&str] = &[
    "public",
    "internal",
    "confidential",
    "restricted",
    "restricted-plus",
];
pub const UP_TO_INTERNAL: &[&str] = &["public", "internal"];

/// Fixed evaluation time for every vector.
pub fn vector_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 6, 1, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason")]
pub enum Expectation {
    #[serde(rename = "ADMIT")]
    Admit,
    #[serde(rename = "DENY")]
    Deny(DenyReason),
}

impl Expectation {
    pub fn matches(&self, verdict: &Verdict) -> bool {
        match (self, verdict) {
            (Expectation::Admit, Verdict::Allow { .. }) => true,
            (Expectation::Deny(want), Verdict::Deny { reason, .. }) => want == reason,
            _ => false,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Admit => f.write_str("ADMIT"),
            Expectation::Deny(r) => match r.clause() {
                Some(c) => write!(f, "DENY({c}) {r}"),
                None => write!(f, "DENY {r}"),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct VectorSetup {
    pub trust_root: TrustRootContent,
    pub scheme: ClassificationScheme,
    pub required_level: String,
    pub server_url: String,
    pub now: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct ConformanceVector {
    pub index: u8,
    pub description: &'static str,
    pub setup: VectorSetup,
    /// Exact bytes served at the well-known path.
    pub document: Vec<u8>,
    pub expected: Expectation,
}

fn baseline_body() -> AttestationDocument {
    let mut doc = AttestationDocument::new(
        "mcp.example.gmail",
        "example-corp",
        "2.3.1",
        "restricted-plus",
        vec!["mcp-server".into()],
    );
    doc.net_allowed_hosts = Some(vec![]);
    doc
}

fn sign(doc: &AttestationDocument, key: &KeyPair) -> AttestationDocument {
    sign_document(doc, key).expect("vector signing key carries a private key")
}

/// Build the vectors around signer `key` (approved up to RESTRICTED-PLUS).
pub fn build_vectors(key: &KeyPair) -> Vec<ConformanceVector> {
    let now = vector_now();
    let root_with = |signer: SignerRecord| {
        TrustRootContent::new([signer]).expect("single signer")
    };
    let standard_root = root_with(SignerRecord::for_key(key, UP_TO_RESTRICTED_PLUS));
    let setup = |trust_root: TrustRootContent, server_url: &str| VectorSetup {
        trust_root,
        scheme: default_scheme(),
        required_level: REQUIRED_LEVEL.into(),
        server_url: server_url.into(),
        now,
    };
    let baseline = sign(&baseline_body(), key);
    let vector = |index, description, setup, doc: &AttestationDocument, expected| ConformanceVector {
        index,
        description,
        setup,
        document: doc.to_json_bytes(),
        expected,
    };

    let mut v2 = baseline.clone();
    v2.capabilities = vec!["tool.invoke".into()];

    let mut v3 = baseline.clone();
    v3.signature = None;

    let mut v4 = baseline.clone();
    v4.signer_key_id = Some("unknown".into());

    let mut v7 = baseline.clone();
    let mut sig = BASE64
        .decode(v7.signature.as_deref().expect("baseline is signed"))
        .expect("baseline signature is base64");
    sig[0] ^= 0x01;
    v7.signature = Some(BASE64.encode(sig));

    let mut at_internal = baseline_body();
    at_internal.clearance = "internal".into();
    let v9 = sign(&at_internal, key);
    let mut v8 = v9.clone();
    v8.clearance = "restricted-plus".into();

    let mut host_bound = baseline_body();
    host_bound.net_allowed_hosts = Some(vec![BOUND_HOST.into()]);
    let v10 = sign(&host_bound, key);

    vec![
        vector(1, "valid baseline: clearance=restricted-plus, signed by S, netAllowedHosts=[]",
            setup(standard_root.clone(), BOUND_ORIGIN), &baseline, Expectation::Admit),
        vector(2, "capabilities = [\"tool.invoke\"]",
            setup(standard_root.clone(), BOUND_ORIGIN), &v2, Expectation::Deny(DenyReason::NotMcpServer)),
        vector(3, "signature removed",
            setup(standard_root.clone(), BOUND_ORIGIN), &v3, Expectation::Deny(DenyReason::Unsigned)),
        vector(4, "signerKeyId = \"unknown\"",
            setup(standard_root.clone(), BOUND_ORIGIN), &v4, Expectation::Deny(DenyReason::SignerNotTrusted)),
        vector(5, "S.notAfter in the past",
            setup(root_with(SignerRecord::for_key(key, UP_TO_RESTRICTED_PLUS).with_not_after(now - Duration::days(1))), BOUND_ORIGIN),
            &baseline, Expectation::Deny(DenyReason::SignerExpired)),
        vector(6, "S approved only to internal",
            setup(root_with(SignerRecord::for_key(key, UP_TO_INTERNAL)), BOUND_ORIGIN),
            &baseline, Expectation::Deny(DenyReason::SignerNotApproved)),
        vector(7, "one byte of signature flipped",
            setup(standard_root.clone(), BOUND_ORIGIN), &v7, Expectation::Deny(DenyReason::BadSignature)),
        vector(8, "clearance raised to restricted-plus after signing at internal",
            setup(standard_root.clone(), BOUND_ORIGIN), &v8, Expectation::Deny(DenyReason::BadSignature)),
        vector(9, "clearance=internal, required restricted-plus",
            setup(standard_root.clone(), BOUND_ORIGIN), &v9, Expectation::Deny(DenyReason::BelowRequired)),
        vector(10, "netAllowedHosts=[\"a.example\"], served from b.example",
            setup(standard_root.clone(), FOREIGN_ORIGIN), &v10, Expectation::Deny(DenyReason::HostNotBound)),
        vector(11, "netAllowedHosts=[\"a.example\"], served from a.example",
            setup(standard_root, BOUND_ORIGIN), &v10, Expectation::Admit),
    ]
}

/// Anything that can produce a verdict for a vector.
pub trait VectorVerifier {
    fn verify(&self, vector: &ConformanceVector) -> Verdict;
}

impl<F: Fn(&ConformanceVector) -> Verdict> VectorVerifier for F {
    fn verify(&self, vector: &ConformanceVector) -> Verdict {
        self(vector)
    }
}

/// The shipping verifier, fed the vector's document through a static fetcher.
#[derive(Debug, Default, Clone, Copy)]
pub struct ProductionVerifier;

impl VectorVerifier for ProductionVerifier {
    fn verify(&self, vector: &ConformanceVector) -> Verdict {
        let fetcher = StaticFetcher::serving(vector.document.clone());
        verify_server_clearance(&VerificationRequest {
            server_url: &vector.setup.server_url,
            required_level: &vector.setup.required_level,
            now: vector.setup.now,
            scheme: &vector.setup.scheme,
            trust_root: &vector.setup.trust_root,
            fetcher: &fetcher,
        })
    }
}

#[derive(Debug, Clone)]
pub struct VectorResult {
    pub index: u8,
    pub description: &'static str,
    pub expected: Expectation,
    pub actual: Verdict,
}

impl VectorResult {
    pub fn passed(&self) -> bool {
        self.expected.matches(&self.actual)
    }
}

#[derive(Debug, Clone)]
pub struct ConformanceReport {
    pub results: Vec<VectorResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.results.len()
    }

    pub fn failures(&self) -> impl Iterator<Item = &VectorResult> {
        self.results.iter().filter(|r| !r.passed())
    }

    pub fn summary(&self) -> String {
        format!("{}/{} pass", self.passed(), self.results.len())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let got = match &r.actual {
                Verdict::Allow { .. } => "ADMIT".to_string(),
                Verdict::Deny { reason, .. } => format!("DENY {reason}"),
            };
            out.push_str(&format!(
                "{} vector {:>2}: expected {:<28} got {:<24} {}\n",
                if r.passed() { "PASS" } else { "FAIL" },
                r.index,
                r.expected.to_string(),
                got,
                r.description
            ));
        }
        out.push_str(&self.summary());
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "passed": self.passed(),
            "total": self.results.len(),
            "vectors": self.results.iter().map(|r| json!({
                "index": r.index,
                "description": r.description,
                "expected": r.expected,
                "actual": match &r.actual {
                    Verdict::Allow { .. } => json!({"verdict": "ADMIT"}),
                    Verdict::Deny { reason, .. } => json!({"verdict": "DENY", "reason": reason}),
                },
                "pass": r.passed(),
            })).collect::<Vec<_>>(),
        })
    }
}

pub fn run_vectors(vectors: &[ConformanceVector], verifier: &dyn VectorVerifier) -> ConformanceReport {
    ConformanceReport {
        results: vectors
            .iter()
            .map(|v| VectorResult {
                index: v.index,
                description: v.description,
                expected: v.expected,
                actual: verifier.verify(v),
            })
            .collect(),
    }
}

/// One row of an exported vector manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub index: u8,
    pub description: String,
    pub sad: String,
    pub trust_root: String,
    pub required: String,
    pub server_url: String,
    pub origin: String,
    pub now: DateTime<Utc>,
    pub expected: Expectation,
}

/// Write each vector as a served SAD file plus its trust root, and a
/// `manifest.json` of expectations.
pub fn export_vectors(vectors: &[ConformanceVector], dir: &Path) -> std::io::Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::with_capacity(vectors.len());
    for v in vectors {
        let sad = format!("vector-{:02}.sad.json", v.index);
        let trust_root = format!("vector-{:02}.trust-root.json", v.index);
        std::fs::write(dir.join(&sad), &v.document)?;
        std::fs::write(dir.join(&trust_root), v.setup.trust_root.to_file_json())?;
        manifest.push(ManifestEntry {
            index: v.index,
            description: v.description.to_string(),
            sad,
            trust_root,
            required: v.setup.required_level.clone(),
            server_url: v.setup.server_url.clone(),
            origin: crate::admission::host_of(&v.setup.server_url).unwrap_or_default(),
            now: v.setup.now,
            expected: v.expected,
        });
    }
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}
