//! The host's pinned signer set and its one-way lock.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::ClassificationScheme;
use crate::sad::KeyPair;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustRootError {
    #[error("trust root is locked")]
    Locked,
    #[error("trust root file is malformed: {0}")]
    Malformed(String),
    #[error("signer `{key_id}`: public key must decode to 32 bytes, got {len}")]
    BadKeyLength { key_id: String, len: usize },
    #[error("signer `{0}`: public key is not base64")]
    BadKeyEncoding(String),
    #[error("duplicate signer keyId `{0}`")]
    DuplicateKeyId(String),
    #[error("signer keyId must not be empty")]
    EmptyKeyId,
}

/// One pinned verification key and the levels it may vouch for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerRecord {
    pub key_id: String,
    pub public_key: [u8; 32],
    pub approved_clearance: Vec<String>,
    pub not_after: Option<DateTime<Utc>>,
}

impl SignerRecord {
    pub fn new(key_id: impl Into<String>, public_key: [u8; 32], approved: &[&str]) -> Self {
        Self {
            key_id: key_id.into(),
            public_key,
            approved_clearance: approved.iter().map(|s| s.to_string()).collect(),
            not_after: None,
        }
    }

    pub fn for_key(key: &KeyPair, approved: &[&str]) -> Self {
        Self::new(key.key_id.clone(), key.public_key_bytes(), approved)
    }

    pub fn with_not_after(mut self, not_after: DateTime<Utc>) -> Self {
        self.not_after = Some(not_after);
        self
    }

    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        matches!(self.not_after, Some(t) if t < now)
    }

    /// Whether `clearance` is in the approved list, compared by resolved
    /// rank so aliases and case variants count. Names that do not resolve in
    /// `scheme` never match.
    pub fn approves(&self, scheme: &ClassificationScheme, clearance: &str) -> bool {
        let Some(asserted) = scheme.resolve(clearance) else {
            return false;
        };
        self.approved_clearance
            .iter()
            .filter_map(|name| scheme.resolve(name))
            .any(|rank| rank == asserted)
    }
}

/// An immutable signer set keyed by keyId.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustRootContent {
    signers: BTreeMap<String, SignerRecord>,
}

impl TrustRootContent {
    pub fn new(signers: impl IntoIterator<Item = SignerRecord>) -> Result<Self, TrustRootError> {
        let mut map = BTreeMap::new();
        for signer in signers {
            if signer.key_id.is_empty() {
                return Err(TrustRootError::EmptyKeyId);
            }
            if map.contains_key(&signer.key_id) {
                return Err(TrustRootError::DuplicateKeyId(signer.key_id));
            }
            map.insert(signer.key_id.clone(), signer);
        }
        Ok(Self { signers: map })
    }

    /// Exact, case-sensitive keyId lookup.
    pub fn find(&self, key_id: &str) -> Option<&SignerRecord> {
        self.signers.get(key_id)
    }

    pub fn signers(&self) -> impl Iterator<Item = &SignerRecord> {
        self.signers.values()
    }

    pub fn len(&self) -> usize {
        self.signers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signers.is_empty()
    }

    /// The development layout: a community and a bundled-extension signer
    /// approved up to INTERNAL, plus a high-tier signer approved through
    /// RESTRICTED-PLUS.
    pub fn dev_bundle(community: &KeyPair, bundled: &KeyPair, high_tier: &KeyPair) -> Self {
        const UP_TO_INTERNAL: &[&str] = &["PUBLIC", "INTERNAL"];
        const UP_TO_RESTRICTED_PLUS: &[&str] = &[
            "PUBLIC",
            "INTERNAL",
            "CONFIDENTIAL",
            "RESTRICTED",
            "RESTRICTED-PLUS",
        ];
        Self::new([
            SignerRecord::for_key(community, UP_TO_INTERNAL),
            SignerRecord::for_key(bundled, UP_TO_INTERNAL),
            SignerRecord::for_key(high_tier, UP_TO_RESTRICTED_PLUS),
        ])
        .expect("dev bundle keyIds must be distinct")
    }

    pub fn to_file_json(&self) -> String {
        let file = TrustRootFile {
            signers: self
                .signers
                .values()
                .map(|s| SignerFileEntry {
                    key_id: s.key_id.clone(),
                    public_key: BASE64.encode(s.public_key),
                    approved_clearance: s.approved_clearance.clone(),
                    not_after: s.not_after,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("trust roots always serialize")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TrustRootFile {
    signers: Vec<SignerFileEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SignerFileEntry {
    key_id: String,
    public_key: String,
    #[serde(default)]
    approved_clearance: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    not_after: Option<DateTime<Utc>>,
}

/// Parse a trust-root file:
/// `{"signers":[{"keyId","publicKey","approvedClearance":[..],"notAfter"?}]}`.
pub fn load_trust_root_file(raw: &[u8]) -> Result<TrustRootContent, TrustRootError> {
    let file: TrustRootFile =
        serde_json::from_slice(raw).map_err(|e| TrustRootError::Malformed(e.to_string()))?;
    let mut records = Vec::with_capacity(file.signers.len());
    for entry in file.signers {
        let bytes = BASE64
            .decode(entry.public_key.as_bytes())
            .map_err(|_| TrustRootError::BadKeyEncoding(entry.key_id.clone()))?;
        let public_key: [u8; 32] =
            bytes
                .as_slice()
                .try_into()
                .map_err(|_| TrustRootError::BadKeyLength {
                    key_id: entry.key_id.clone(),
                    len: bytes.len(),
                })?;
        records.push(SignerRecord {
            key_id: entry.key_id,
            public_key,
            approved_clearance: entry.approved_clearance,
            not_after: entry.not_after,
        });
    }
    TrustRootContent::new(records)
}

struct State {
    content: Arc<TrustRootContent>,
    locked: bool,
}

/// The process-wide trust root. Readers get cheap snapshots; writers are
/// refused for good once [`TrustRoot::lock`] has been called.
pub struct TrustRoot {
    state: RwLock<State>,
}

impl Default for TrustRoot {
    fn default() -> Self {
        Self::new(TrustRootContent::default())
    }
}

impl std::fmt::Debug for TrustRoot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = self.read();
        f.debug_struct("TrustRoot")
            .field("signers", &state.content.len())
            .field("locked", &state.locked)
            .finish()
    }
}

impl TrustRoot {
    pub fn new(content: TrustRootContent) -> Self {
        Self {
            state: RwLock::new(State {
                content: Arc::new(content),
                locked: false,
            }),
        }
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Replace the signer set. Fails with [`TrustRootError::Locked`] after
    /// [`TrustRoot::lock`].
    pub fn set(&self, content: TrustRootContent) -> Result<(), TrustRootError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        if state.locked {
            return Err(TrustRootError::Locked);
        }
        state.content = Arc::new(content);
        Ok(())
    }

    /// Idempotent.
    pub fn lock(&self) {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        state.locked = true;
    }

    pub fn is_locked(&self) -> bool {
        self.read().locked
    }

    pub fn find(&self, key_id: &str) -> Option<SignerRecord> {
        self.read().content.find(key_id).cloned()
    }

    pub fn snapshot(&self) -> Arc<TrustRootContent> {
        Arc::clone(&self.read().content)
    }
}
