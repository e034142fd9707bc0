//! Server clearance verification and flavor-gated connection decisions.
//!
//! [`verify_server_clearance`] fetches the server's attestation document and
//! evaluates the admission clauses in a fixed order, denying on the first
//! failure:
//!
//! | clause | check                                             | reason                |
//! |--------|---------------------------------------------------|-----------------------|
//! | -      | document fetched                                  | `fetch_failed`        |
//! | -      | document parses                                   | `manifest_invalid`    |
//! | (a)    | capabilities contain `mcp-server`                 | `not_mcp_server`      |
//! | (b)    | `signerKeyId` and `signature` present             | `unsigned`            |
//! | (c)    | signer is in the trust root                       | `signer_not_trusted`  |
//! | (d)    | signer `notAfter`, if set, has not passed         | `signer_expired`      |
//! | (e)    | signer approved for the asserted clearance        | `signer_not_approved` |
//! | (f)    | signature verifies over the canonical body        | `bad_signature`       |
//! | (g)    | asserted clearance meets the required level       | `below_required`      |
//! | (h)    | non-empty `netAllowedHosts` contains the origin   | `host_not_bound`      |
//!
//! [`Admission::connect`] wraps the verdict in the host's flavor and writes
//! exactly one audit record per call.

use std::fmt;
use std::io::Read as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use url::Url;

use crate::audit::{AuditError, AuditEvent, AuditLog};
use crate::clock::Clock;
use crate::lattice::ClassificationScheme;
use crate::sad::{self, parse_document};
use crate::trustroot::{TrustRoot, TrustRootContent};

/// Vendor-neutral discovery path, tried first.
pub const WELL_KNOWN_ATTESTATION_PATH: &str = "/.well-known/mcp-attestation";
/// Legacy path, tried when the first returns 404.
pub const WELL_KNOWN_LEGACY_PATH: &str = "/.well-known/enclawed-clearance.json";

pub const OPEN_FLAVOR_NOTE: &str = "open flavor: warn-only";

pub const DEFAULT_FETCH_TIMEOUT: Duration = Duration::from_secs(10);

const MAX_DOCUMENT_BYTES: u64 = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    FetchFailed,
    ManifestInvalid,
    NotMcpServer,
    Unsigned,
    SignerNotTrusted,
    SignerExpired,
    SignerNotApproved,
    BadSignature,
    BelowRequired,
    HostNotBound,
    ToolNotAdmitted,
    NoRegisteredBridge,
}

impl DenyReason {
    pub const ALL: [DenyReason; 12] = [
        DenyReason::FetchFailed,
        DenyReason::ManifestInvalid,
        DenyReason::NotMcpServer,
        DenyReason::Unsigned,
        DenyReason::SignerNotTrusted,
        DenyReason::SignerExpired,
        DenyReason::SignerNotApproved,
        DenyReason::BadSignature,
        DenyReason::BelowRequired,
        DenyReason::HostNotBound,
        DenyReason::ToolNotAdmitted,
        DenyReason::NoRegisteredBridge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::FetchFailed => "fetch_failed",
            DenyReason::ManifestInvalid => "manifest_invalid",
            DenyReason::NotMcpServer => "not_mcp_server",
            DenyReason::Unsigned => "unsigned",
            DenyReason::SignerNotTrusted => "signer_not_trusted",
            DenyReason::SignerExpired => "signer_expired",
            DenyReason::SignerNotApproved => "signer_not_approved",
            DenyReason::BadSignature => "bad_signature",
            DenyReason::BelowRequired => "below_required",
            DenyReason::HostNotBound => "host_not_bound",
            DenyReason::ToolNotAdmitted => "tool_not_admitted",
            DenyReason::NoRegisteredBridge => "no_registered_bridge",
        }
    }

    /// The admission clause letter, for the eight clause reasons.
    pub fn clause(self) -> Option<char> {
        match self {
            DenyReason::NotMcpServer => Some('a'),
            DenyReason::Unsigned => Some('b'),
            DenyReason::SignerNotTrusted => Some('c'),
            DenyReason::SignerExpired => Some('d'),
            DenyReason::SignerNotApproved => Some('e'),
            DenyReason::BadSignature => Some('f'),
            DenyReason::BelowRequired => Some('g'),
            DenyReason::HostNotBound => Some('h'),
            _ => None,
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown deny reason `{0}`")]
pub struct UnknownReason(pub String);

impl FromStr for DenyReason {
    type Err = UnknownReason;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DenyReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownReason(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// `signer_key_id` is `None` only for the bridge fast path, which admits
    /// without a document.
    Allow {
        clearance: String,
        signer_key_id: Option<String>,
    },
    Deny {
        reason: DenyReason,
        detail: String,
    },
}

impl Verdict {
    fn deny(reason: DenyReason, detail: impl Into<String>) -> Self {
        Verdict::Deny {
            reason,
            detail: detail.into(),
        }
    }

    pub fn is_allow(&self) -> bool {
        matches!(self, Verdict::Allow { .. })
    }

    pub fn reason(&self) -> Option<DenyReason> {
        match self {
            Verdict::Deny { reason, .. } => Some(*reason),
            Verdict::Allow { .. } => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Allow {
                clearance,
                signer_key_id,
            } => write!(
                f,
                "ADMIT clearance={clearance} signerKeyId={}",
                signer_key_id.as_deref().unwrap_or("-")
            ),
            Verdict::Deny { reason, detail } => write!(f, "DENY {reason}: {detail}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// Advisory: failures are surfaced as warnings, never as success.
    #[default]
    Open,
    /// Enforcing: failures are hard denials.
    Enclaved,
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Flavor::Open),
            "enclaved" => Ok(Flavor::Enclaved),
            other => Err(format!("unknown flavor `{other}` (expected open or enclaved)")),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Flavor::Open => "open",
            Flavor::Enclaved => "enclaved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectStatus {
    Ok,
    Denied,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectResult {
    pub status: ConnectStatus,
    pub verdict: Verdict,
    pub flavor_note: Option<&'static str>,
}

impl ConnectResult {
    pub fn is_ok(&self) -> bool {
        self.status == ConnectStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("invalid server URL: {0}")]
    InvalidUrl(String),
    #[error("no attestation document at either well-known path (unattested)")]
    Unattested,
    #[error("HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error("network failure: {0}")]
    Network(String),
}

/// Supplies the attestation document for a server URL.
pub trait DocumentFetcher: Send + Sync {
    fn fetch(&self, server_url: &str) -> Result<Vec<u8>, FetchError>;
}

impl<F: DocumentFetcher + ?Sized> DocumentFetcher for Arc<F> {
    fn fetch(&self, server_url: &str) -> Result<Vec<u8>, FetchError> {
        (**self).fetch(server_url)
    }
}

/// The lowercased host of an absolute URL, without port or scheme.
pub fn host_of(server_url: &str) -> Result<String, FetchError> {
    let url = Url::parse(server_url).map_err(|e| FetchError::InvalidUrl(e.to_string()))?;
    url.host_str()
        .filter(|h| !h.is_empty())
        .map(|h| h.to_ascii_lowercase())
        .ok_or_else(|| FetchError::InvalidUrl(format!("{server_url} has no host")))
}

/// Both discovery URLs on the server's origin, in the order they are tried.
pub fn well_known_urls(server_url: &str) -> Result<[String; 2], FetchError> {
    let url = Url::parse(server_url).map_err(|e| FetchError::InvalidUrl(e.to_string()))?;
    if url.host_str().is_none() {
        return Err(FetchError::InvalidUrl(format!("{server_url} has no host")));
    }
    let origin = url.origin().ascii_serialization();
    Ok([
        format!("{origin}{WELL_KNOWN_ATTESTATION_PATH}"),
        format!("{origin}{WELL_KNOWN_LEGACY_PATH}"),
    ])
}

/// Fetches the document over HTTP(S). Redirects are never followed.
#[derive(Clone)]
pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self::new(DEFAULT_FETCH_TIMEOUT)
    }
}

impl fmt::Debug for HttpFetcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpFetcher").finish_non_exhaustive()
    }
}

impl HttpFetcher {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(timeout)
                .redirects(0)
                .build(),
        }
    }

    fn get(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        match self.agent.get(url).set("Accept", "application/json").call() {
            Ok(resp) if resp.status() == 200 => {
                let mut body = Vec::new();
                resp.into_reader()
                    .take(MAX_DOCUMENT_BYTES)
                    .read_to_end(&mut body)
                    .map_err(|e| FetchError::Network(e.to_string()))?;
                Ok(body)
            }
            Ok(resp) => Err(FetchError::Http {
                status: resp.status(),
                url: url.to_string(),
            }),
            Err(ureq::Error::Status(status, _)) => Err(FetchError::Http {
                status,
                url: url.to_string(),
            }),
            Err(e) => Err(FetchError::Network(e.to_string())),
        }
    }
}

impl DocumentFetcher for HttpFetcher {
    fn fetch(&self, server_url: &str) -> Result<Vec<u8>, FetchError> {
        let [primary, legacy] = well_known_urls(server_url)?;
        match self.get(&primary) {
            Err(FetchError::Http { status: 404, .. }) => match self.get(&legacy) {
                Err(FetchError::Http { status: 404, .. }) => Err(FetchError::Unattested),
                other => other,
            },
            other => other,
        }
    }
}

/// Serves the same bytes for every server URL.
#[derive(Debug, Clone)]
pub struct StaticFetcher(pub Result<Vec<u8>, FetchError>);

impl StaticFetcher {
    pub fn serving(bytes: impl Into<Vec<u8>>) -> Self {
        Self(Ok(bytes.into()))
    }

    pub fn failing(err: FetchError) -> Self {
        Self(Err(err))
    }
}

impl DocumentFetcher for StaticFetcher {
    fn fetch(&self, _server_url: &str) -> Result<Vec<u8>, FetchError> {
        self.0.clone()
    }
}

/// Wraps a fetcher and counts calls.
#[derive(Debug, Default)]
pub struct CountingFetcher<F> {
    inner: F,
    calls: AtomicU64,
}

impl<F> CountingFetcher<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F: DocumentFetcher> DocumentFetcher for CountingFetcher<F> {
    fn fetch(&self, server_url: &str) -> Result<Vec<u8>, FetchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.fetch(server_url)
    }
}

/// Everything one verification needs; the clock is already read into `now`.
pub struct VerificationRequest<'a> {
    pub server_url: &'a str,
    pub required_level: &'a str,
    pub now: DateTime<Utc>,
    pub scheme: &'a ClassificationScheme,
    pub trust_root: &'a TrustRootContent,
    pub fetcher: &'a dyn DocumentFetcher,
}

pub fn verify_server_clearance(req: &VerificationRequest<'_>) -> Verdict {
    let host = match host_of(req.server_url) {
        Ok(h) => h,
        Err(e) => return Verdict::deny(DenyReason::FetchFailed, e.to_string()),
    };
    let raw = match req.fetcher.fetch(req.server_url) {
        Ok(raw) => raw,
        Err(e) => return Verdict::deny(DenyReason::FetchFailed, e.to_string()),
    };
    evaluate_document(
        &raw,
        Some(&host),
        req.required_level,
        req.now,
        req.scheme,
        req.trust_root,
    )
}

/// The post-fetch part of verification. `origin_host` is the host the
/// document was served from; `None` means unknown, which fails clause (h)
/// whenever the document is host-bound.
pub fn evaluate_document(
    raw: &[u8],
    origin_host: Option<&str>,
    required_level: &str,
    now: DateTime<Utc>,
    scheme: &ClassificationScheme,
    trust_root: &TrustRootContent,
) -> Verdict {
    let doc = match parse_document(raw) {
        Ok(doc) => doc,
        Err(e) => return Verdict::deny(DenyReason::ManifestInvalid, e.to_string()),
    };

    // (a)
    if !doc.has_mcp_server_capability() {
        return Verdict::deny(
            DenyReason::NotMcpServer,
            format!("capabilities {:?} lack \"mcp-server\"", doc.capabilities),
        );
    }
    // (b)
    let (Some(key_id), Some(_)) = (doc.signer_key_id.as_deref(), doc.signature.as_deref()) else {
        return Verdict::deny(DenyReason::Unsigned, "signerKeyId or signature absent");
    };
    // (c)
    let Some(signer) = trust_root.find(key_id) else {
        return Verdict::deny(
            DenyReason::SignerNotTrusted,
            format!("signer `{key_id}` is not in the trust root"),
        );
    };
    // (d)
    if signer.is_expired(now) {
        return Verdict::deny(
            DenyReason::SignerExpired,
            format!(
                "signer `{key_id}` expired at {}",
                signer.not_after.map(|t| t.to_rfc3339()).unwrap_or_default()
            ),
        );
    }
    // (e)
    if !signer.approves(scheme, &doc.clearance) {
        return Verdict::deny(
            DenyReason::SignerNotApproved,
            format!(
                "signer `{key_id}` is not approved for clearance `{}`",
                doc.clearance
            ),
        );
    }
    // (f)
    if !sad::verify_signature(&doc, &signer.public_key) {
        return Verdict::deny(
            DenyReason::BadSignature,
            "signature does not verify over the canonical body",
        );
    }
    // (g)
    match scheme.meets(&doc.clearance, required_level) {
        Ok(true) => {}
        Ok(false) => {
            return Verdict::deny(
                DenyReason::BelowRequired,
                format!(
                    "clearance `{}` is below required `{required_level}`",
                    doc.clearance
                ),
            )
        }
        Err(e) => return Verdict::deny(DenyReason::BelowRequired, e.to_string()),
    }
    // (h)
    if let Some(hosts) = doc.net_allowed_hosts.as_deref().filter(|h| !h.is_empty()) {
        let bound = origin_host
            .map(|origin| hosts.iter().any(|h| h.eq_ignore_ascii_case(origin)))
            .unwrap_or(false);
        if !bound {
            return Verdict::deny(
                DenyReason::HostNotBound,
                format!(
                    "origin `{}` is not in netAllowedHosts {hosts:?}",
                    origin_host.unwrap_or("<unknown>")
                ),
            );
        }
    }

    Verdict::Allow {
        clearance: doc.clearance,
        signer_key_id: Some(signer.key_id.clone()),
    }
}

/// The host-side admission gate: verifier, flavor handling and audit.
pub struct Admission {
    scheme: Arc<ClassificationScheme>,
    trust_root: Arc<TrustRoot>,
    fetcher: Arc<dyn DocumentFetcher>,
    clock: Arc<dyn Clock>,
    audit: Arc<AuditLog>,
    verifications: AtomicU64,
}

impl fmt::Debug for Admission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Admission")
            .field("scheme", &self.scheme.name())
            .field("trust_root", &self.trust_root)
            .field("verifications", &self.verification_count())
            .finish_non_exhaustive()
    }
}

impl Admission {
    pub fn new(
        scheme: Arc<ClassificationScheme>,
        trust_root: Arc<TrustRoot>,
        fetcher: Arc<dyn DocumentFetcher>,
        clock: Arc<dyn Clock>,
        audit: Arc<AuditLog>,
    ) -> Self {
        Self {
            scheme,
            trust_root,
            fetcher,
            clock,
            audit,
            verifications: AtomicU64::new(0),
        }
    }

    pub fn scheme(&self) -> &ClassificationScheme {
        &self.scheme
    }

    pub fn trust_root(&self) -> &TrustRoot {
        &self.trust_root
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Number of full verifications run so far (fast-path connects excluded).
    pub fn verification_count(&self) -> u64 {
        self.verifications.load(Ordering::SeqCst)
    }

    /// Run the verifier against the current trust root. No audit.
    pub fn verify(&self, server_url: &str, required_level: &str) -> Verdict {
        self.verifications.fetch_add(1, Ordering::SeqCst);
        let trust_root = self.trust_root.snapshot();
        verify_server_clearance(&VerificationRequest {
            server_url,
            required_level,
            now: self.clock.now(),
            scheme: &self.scheme,
            trust_root: &trust_root,
            fetcher: self.fetcher.as_ref(),
        })
    }

    /// Decide a connection and record exactly one audit event. An audit
    /// failure is returned as an error; the decision is not reported.
    pub fn connect(
        &self,
        server_url: &str,
        required_level: &str,
        flavor: Flavor,
        skip_clearance_preflight: bool,
    ) -> Result<ConnectResult, AuditError> {
        if skip_clearance_preflight {
            self.audit.append(
                AuditEvent::ConnectAllow,
                json!({
                    "server": server_url,
                    "level": required_level,
                    "signerKeyId": null,
                    "fastPath": true,
                }),
            )?;
            return Ok(ConnectResult {
                status: ConnectStatus::Ok,
                verdict: Verdict::Allow {
                    clearance: required_level.to_string(),
                    signer_key_id: None,
                },
                flavor_note: None,
            });
        }

        let verdict = self.verify(server_url, required_level);
        match &verdict {
            Verdict::Allow {
                clearance,
                signer_key_id,
            } => {
                self.audit.append(
                    AuditEvent::ConnectAllow,
                    json!({
                        "server": server_url,
                        "level": clearance,
                        "signerKeyId": signer_key_id,
                    }),
                )?;
                Ok(ConnectResult {
                    status: ConnectStatus::Ok,
                    verdict,
                    flavor_note: None,
                })
            }
            Verdict::Deny { reason, detail } => {
                let (event, status, note) = match flavor {
                    Flavor::Enclaved => (AuditEvent::ConnectDeny, ConnectStatus::Denied, None),
                    Flavor::Open => (
                        AuditEvent::ConnectWarn,
                        ConnectStatus::Warn,
                        Some(OPEN_FLAVOR_NOTE),
                    ),
                };
                self.audit.append(
                    event,
                    json!({
                        "server": server_url,
                        "reason": reason.as_str(),
                        "detail": detail,
                    }),
                )?;
                Ok(ConnectResult {
                    status,
                    verdict,
                    flavor_note: note,
                })
            }
        }
    }
}
