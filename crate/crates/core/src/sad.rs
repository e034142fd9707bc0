//! Server Attestation Documents: the signed clearance assertion a tool server
//! publishes at a well-known path.
//!
//! The signature is a detached Ed25519 signature over [`canonical_body`]:
//! exactly the registered fields other than `signature`, encoded with the
//! rules in [`crate::canonical`]. An absent `signerKeyId` is written as
//! `null`; absent `verification` and `netAllowedHosts` are omitted.
//! Unknown fields survive parsing in [`AttestationDocument::extra`] but never
//! reach the signed bytes.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::{self, CanonicalError};

/// The only document version this implementation understands.
pub const SAD_VERSION: u64 = 1;

/// Capability that marks a document as an MCP server attestation.
pub const MCP_SERVER_CAPABILITY: &str = "mcp-server";

/// Fields that participate in the canonical body.
pub const REGISTERED_BODY_FIELDS: [&str; 9] = [
    "v",
    "id",
    "publisher",
    "version",
    "clearance",
    "capabilities",
    "signerKeyId",
    "verification",
    "netAllowedHosts",
];

#[derive(Debug, Error)]
pub enum SadError {
    #[error("document is not valid JSON: {0}")]
    Malformed(String),
    #[error("document must be a JSON object")]
    NotAnObject,
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` must be {expected}")]
    WrongType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("unsupported document version {0}")]
    UnsupportedVersion(String),
    #[error("signing requires a private key for `{0}`")]
    MissingPrivateKey(String),
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

/// A parsed Server Attestation Document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AttestationDocument {
    pub v: u64,
    pub id: String,
    pub publisher: String,
    pub version: String,
    pub clearance: String,
    pub capabilities: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signer_key_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net_allowed_hosts: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    /// Unregistered fields, kept for diagnostics only.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl AttestationDocument {
    /// An unsigned version-1 document with the required fields filled in.
    pub fn new(
        id: impl Into<String>,
        publisher: impl Into<String>,
        version: impl Into<String>,
        clearance: impl Into<String>,
        capabilities: Vec<String>,
    ) -> Self {
        Self {
            v: SAD_VERSION,
            id: id.into(),
            publisher: publisher.into(),
            version: version.into(),
            clearance: clearance.into(),
            capabilities,
            signer_key_id: None,
            net_allowed_hosts: None,
            verification: None,
            signature: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn is_attested(&self) -> bool {
        self.signer_key_id.is_some() && self.signature.is_some()
    }

    pub fn has_mcp_server_capability(&self) -> bool {
        self.capabilities.iter().any(|c| c == MCP_SERVER_CAPABILITY)
    }

    /// Wire form, as served at the well-known path.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("attestation documents always serialize")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("attestation documents always serialize")
    }
}

/// The bytes covered by the signature.
pub fn canonical_body(doc: &AttestationDocument) -> Result<Vec<u8>, SadError> {
    let mut body = Map::new();
    body.insert("v".into(), Value::from(doc.v));
    body.insert("id".into(), Value::from(doc.id.as_str()));
    body.insert("publisher".into(), Value::from(doc.publisher.as_str()));
    body.insert("version".into(), Value::from(doc.version.as_str()));
    body.insert("clearance".into(), Value::from(doc.clearance.as_str()));
    body.insert(
        "capabilities".into(),
        Value::Array(doc.capabilities.iter().map(|c| Value::from(c.as_str())).collect()),
    );
    body.insert(
        "signerKeyId".into(),
        doc.signer_key_id
            .as_deref()
            .map(Value::from)
            .unwrap_or(Value::Null),
    );
    if let Some(verification) = &doc.verification {
        body.insert("verification".into(), Value::from(verification.as_str()));
    }
    if let Some(hosts) = &doc.net_allowed_hosts {
        body.insert(
            "netAllowedHosts".into(),
            Value::Array(hosts.iter().map(|h| Value::from(h.as_str())).collect()),
        );
    }
    Ok(canonical::to_canonical_bytes(&Value::Object(body))?)
}

/// An Ed25519 key identified by `key_id`. The private half is only present
/// in signing contexts.
#[derive(Clone)]
pub struct KeyPair {
    pub key_id: String,
    verifying: VerifyingKey,
    signing: Option<SigningKey>,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("key_id", &self.key_id)
            .field("public_key", &self.public_key_b64())
            .field("has_private_key", &self.signing.is_some())
            .finish()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(key_id: impl Into<String>, rng: &mut R) -> Self {
        let signing = SigningKey::generate(rng);
        Self {
            key_id: key_id.into(),
            verifying: signing.verifying_key(),
            signing: Some(signing),
        }
    }

    pub fn from_seed(key_id: impl Into<String>, seed: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&seed);
        Self {
            key_id: key_id.into(),
            verifying: signing.verifying_key(),
            signing: Some(signing),
        }
    }

    pub fn public_only(key_id: impl Into<String>, public_key: [u8; 32]) -> Result<Self, SadError> {
        let verifying = VerifyingKey::from_bytes(&public_key)
            .map_err(|e| SadError::InvalidKey(e.to_string()))?;
        Ok(Self {
            key_id: key_id.into(),
            verifying,
            signing: None,
        })
    }

    /// Builds a keypair from a private seed and checks it against the stated
    /// public key, when one is given.
    pub fn from_parts(
        key_id: impl Into<String>,
        public_key: Option<[u8; 32]>,
        seed: [u8; 32],
    ) -> Result<Self, SadError> {
        let pair = Self::from_seed(key_id, seed);
        if let Some(pk) = public_key {
            if pk != pair.public_key_bytes() {
                return Err(SadError::InvalidKey(
                    "public key does not match private key".into(),
                ));
            }
        }
        Ok(pair)
    }

    pub fn public_key_bytes(&self) -> [u8; 32] {
        self.verifying.to_bytes()
    }

    pub fn public_key_b64(&self) -> String {
        BASE64.encode(self.public_key_bytes())
    }

    pub fn private_seed(&self) -> Option<[u8; 32]> {
        self.signing.as_ref().map(|s| s.to_bytes())
    }

    pub fn has_private_key(&self) -> bool {
        self.signing.is_some()
    }

    /// Raw detached signature over arbitrary bytes.
    pub fn sign_bytes(&self, message: &[u8]) -> Result<[u8; 64], SadError> {
        let signing = self
            .signing
            .as_ref()
            .ok_or_else(|| SadError::MissingPrivateKey(self.key_id.clone()))?;
        Ok(signing.sign(message).to_bytes())
    }
}

/// Sign `doc` with `key`. `signerKeyId` is set to the key's id and any
/// existing signature is replaced.
pub fn sign_document(
    doc: &AttestationDocument,
    key: &KeyPair,
) -> Result<AttestationDocument, SadError> {
    if !key.has_private_key() {
        return Err(SadError::MissingPrivateKey(key.key_id.clone()));
    }
    let mut signed = doc.clone();
    signed.signature = None;
    signed.signer_key_id = Some(key.key_id.clone());
    let body = canonical_body(&signed)?;
    signed.signature = Some(BASE64.encode(key.sign_bytes(&body)?));
    Ok(signed)
}

/// True iff `doc.signature` is a valid detached Ed25519 signature over the
/// canonical body under `public_key`. Undecodable signatures are false.
pub fn verify_signature(doc: &AttestationDocument, public_key: &[u8; 32]) -> bool {
    let Some(sig_b64) = doc.signature.as_deref() else {
        return false;
    };
    let Ok(sig_bytes) = BASE64.decode(sig_b64) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(sig_bytes.as_slice()) else {
        return false;
    };
    let Ok(verifying) = VerifyingKey::from_bytes(public_key) else {
        return false;
    };
    let Ok(body) = canonical_body(doc) else {
        return false;
    };
    verifying
        .verify(&body, &Signature::from_bytes(&sig_bytes))
        .is_ok()
}

/// Parse and structurally validate a document.
pub fn parse_document(raw: &[u8]) -> Result<AttestationDocument, SadError> {
    let value: Value =
        serde_json::from_slice(raw).map_err(|e| SadError::Malformed(e.to_string()))?;
    document_from_value(value)
}

pub fn document_from_value(value: Value) -> Result<AttestationDocument, SadError> {
    let Value::Object(mut obj) = value else {
        return Err(SadError::NotAnObject);
    };

    let v = match obj.remove("v") {
        None => return Err(SadError::MissingField("v")),
        Some(Value::Number(n)) => match n.as_u64() {
            Some(SAD_VERSION) => SAD_VERSION,
            Some(_) => return Err(SadError::UnsupportedVersion(n.to_string())),
            None if n.is_i64() => return Err(SadError::UnsupportedVersion(n.to_string())),
            None => {
                return Err(SadError::WrongType {
                    field: "v",
                    expected: "the integer 1",
                })
            }
        },
        Some(_) => {
            return Err(SadError::WrongType {
                field: "v",
                expected: "the integer 1",
            })
        }
    };

    let id = required_string(&mut obj, "id")?;
    let publisher = required_string(&mut obj, "publisher")?;
    let version = required_string(&mut obj, "version")?;
    let clearance = required_string(&mut obj, "clearance")?;
    let capabilities = match obj.remove("capabilities") {
        None => return Err(SadError::MissingField("capabilities")),
        Some(v) => string_array(v, "capabilities")?,
    };
    let signer_key_id = optional_string(&mut obj, "signerKeyId")?;
    if signer_key_id.as_deref() == Some("") {
        return Err(SadError::EmptyField("signerKeyId"));
    }
    let net_allowed_hosts = match obj.remove("netAllowedHosts") {
        None | Some(Value::Null) => None,
        Some(v) => Some(string_array(v, "netAllowedHosts")?),
    };
    let verification = optional_string(&mut obj, "verification")?;
    let signature = optional_string(&mut obj, "signature")?;

    Ok(AttestationDocument {
        v,
        id,
        publisher,
        version,
        clearance,
        capabilities,
        signer_key_id,
        net_allowed_hosts,
        verification,
        signature,
        extra: obj.into_iter().collect(),
    })
}

fn required_string(obj: &mut Map<String, Value>, field: &'static str) -> Result<String, SadError> {
    match obj.remove(field) {
        None => Err(SadError::MissingField(field)),
        Some(Value::String(s)) if s.is_empty() => Err(SadError::EmptyField(field)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(SadError::WrongType {
            field,
            expected: "a string",
        }),
    }
}

fn optional_string(
    obj: &mut Map<String, Value>,
    field: &'static str,
) -> Result<Option<String>, SadError> {
    match obj.remove(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(SadError::WrongType {
            field,
            expected: "a string",
        }),
    }
}

fn string_array(value: Value, field: &'static str) -> Result<Vec<String>, SadError> {
    let wrong = || SadError::WrongType {
        field,
        expected: "an array of strings",
    };
    let Value::Array(items) = value else {
        return Err(wrong());
    };
    items
        .into_iter()
        .map(|item| match item {
            Value::String(s) => Ok(s),
            _ => Err(wrong()),
        })
        .collect()
}
